//! Dataset log-likelihood with exact gradients and per-subject scores.
//!
//! Parameters enter through [`Slot`]s: a slot is either the constant of a
//! structural parameter or its coefficient on one covariate, so that
//! `θ_i[p] = const_p + Σ_c b_pc z_ic`. Without covariate slots every subject
//! shares one θ and records with the same design and noise parameter are
//! pooled, which makes the aggregate likelihood cost independent of the
//! number of subjects.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::choice::{active_params, log_probs_kernel, ErrorSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{check_spec_params, prospect_utility_kernel, ModelSpec, ParamId, ParamVector};
use crate::numeric::{pairwise_sum, pairwise_sum_vectors};
use crate::scalar::{Dual, Scalar};

pub(crate) type ParamDual = Dual<{ ParamId::COUNT }>;

/// One free coordinate of the likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    pub param: ParamId,
    /// `None` for the constant, `Some(c)` for the coefficient on covariate `c`.
    pub covariate: Option<usize>,
}

impl Slot {
    pub fn constant(param: ParamId) -> Self {
        Self { param, covariate: None }
    }

    pub fn label(&self, covariate_names: &[String]) -> String {
        match self.covariate {
            None => self.param.name(),
            Some(c) => format!("{}:{}", self.param.name(), covariate_names[c]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loglik: f64,
    /// Derivative with respect to each slot.
    pub gradient: Vec<f64>,
    /// Per-subject score vectors, when requested.
    pub scores: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug)]
struct Group {
    design: usize,
    noise: ParamId,
    n_b: f64,
    n_a: f64,
}

/// Precomputed evaluation plan for one dataset and specification.
#[derive(Debug)]
pub struct LoglikEngine<'a> {
    spec: ModelSpec,
    error: ErrorSpec,
    dataset: &'a Dataset,
    groups: Vec<Group>,
    /// For each subject: `(group, chosen_b)` of each record.
    subject_terms: Vec<Vec<(usize, bool)>>,
    /// Noise parameter of each record.
    record_noise: Vec<ParamId>,
}

impl<'a> LoglikEngine<'a> {
    pub fn new(spec: ModelSpec, error: ErrorSpec, dataset: &'a Dataset) -> Result<Self> {
        let mut index: HashMap<(usize, ParamId), usize> = HashMap::new();
        let mut groups: Vec<Group> = Vec::new();
        let mut subject_terms = vec![Vec::new(); dataset.n_subjects()];
        let mut record_noise = Vec::with_capacity(dataset.n_records());
        for rec in dataset.records() {
            let noise = error.noise_param(rec.mpl_id)?;
            record_noise.push(noise);
            let g = *index.entry((rec.design, noise)).or_insert_with(|| {
                groups.push(Group {
                    design: rec.design,
                    noise,
                    n_b: 0.0,
                    n_a: 0.0,
                });
                groups.len() - 1
            });
            if rec.chosen_b {
                groups[g].n_b += 1.0;
            } else {
                groups[g].n_a += 1.0;
            }
            subject_terms[rec.subject].push((g, rec.chosen_b));
        }
        Ok(Self {
            spec,
            error,
            dataset,
            groups,
            subject_terms,
            record_noise,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn error(&self) -> &ErrorSpec {
        &self.error
    }

    fn check(&self, theta: &ParamVector) -> Result<()> {
        check_spec_params(&self.spec, theta)?;
        theta.check(&self.error.active_params())
    }

    /// Log-likelihood only.
    pub fn loglik(&self, base: &ParamVector, slots: &[Slot], values: &[f64]) -> Result<f64> {
        if has_covariates(slots) {
            let per_subject = (0..self.dataset.n_subjects())
                .into_par_iter()
                .map(|s| {
                    let theta = self.subject_theta(base, slots, values, s)?;
                    self.check(&theta)?;
                    Ok(self.subject_loglik::<f64>(&theta, s))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(pairwise_sum(&per_subject))
        } else {
            let theta = apply_constants(base, slots, values);
            self.check(&theta)?;
            let terms: Vec<f64> = self
                .groups
                .iter()
                .map(|g| {
                    let (lb, la) = self.group_logs::<f64>(&theta, g);
                    weighted(g.n_b, lb) + weighted(g.n_a, la)
                })
                .collect();
            Ok(pairwise_sum(&terms))
        }
    }

    /// Log-likelihood, gradient over `slots` and optionally per-subject scores.
    pub fn evaluate(
        &self,
        base: &ParamVector,
        slots: &[Slot],
        values: &[f64],
        with_scores: bool,
    ) -> Result<Evaluation> {
        if has_covariates(slots) || with_scores && self.dataset.n_subjects() > 0 {
            self.evaluate_by_subject(base, slots, values, with_scores)
        } else {
            self.evaluate_pooled(base, slots, values)
        }
    }

    fn seeded(&self, theta: &ParamVector) -> ParamVector<ParamDual> {
        let mut lifted = ParamVector::<ParamDual>::lift(theta);
        for id in active_params(&self.spec, &self.error) {
            lifted.set(id, Dual::variable(theta.get(id), id.index()));
        }
        lifted
    }

    fn group_logs<S: Scalar>(&self, theta: &ParamVector<S>, g: &Group) -> (S, S) {
        let design = &self.dataset.designs()[g.design];
        let du = prospect_utility_kernel(&self.spec, theta, &design.option_b)
            - prospect_utility_kernel(&self.spec, theta, &design.option_a);
        log_probs_kernel(&self.error, du, theta, g.noise)
    }

    fn subject_loglik<S: Scalar>(&self, theta: &ParamVector<S>, subject: usize) -> S {
        let mut total = S::cst(0.0);
        for &(g, chosen_b) in &self.subject_terms[subject] {
            let (lb, la) = self.group_logs(theta, &self.groups[g]);
            total += if chosen_b { lb } else { la };
        }
        total
    }

    fn evaluate_pooled(&self, base: &ParamVector, slots: &[Slot], values: &[f64]) -> Result<Evaluation> {
        let theta = apply_constants(base, slots, values);
        self.check(&theta)?;
        let seeded = self.seeded(&theta);
        let mut terms = Vec::with_capacity(self.groups.len());
        let mut grad = [0.0; ParamId::COUNT];
        for g in &self.groups {
            let (lb, la) = self.group_logs(&seeded, g);
            terms.push(weighted(g.n_b, lb.re) + weighted(g.n_a, la.re));
            for (k, d) in grad.iter_mut().enumerate() {
                *d += g.n_b * lb.du[k] + g.n_a * la.du[k];
            }
        }
        Ok(Evaluation {
            loglik: pairwise_sum(&terms),
            gradient: slots.iter().map(|s| grad[s.param.index()]).collect(),
            scores: None,
        })
    }

    fn evaluate_by_subject(
        &self,
        base: &ParamVector,
        slots: &[Slot],
        values: &[f64],
        with_scores: bool,
    ) -> Result<Evaluation> {
        let pooled_theta = if has_covariates(slots) {
            None
        } else {
            let theta = apply_constants(base, slots, values);
            self.check(&theta)?;
            Some(theta)
        };
        // Without covariates every subject shares θ, so the design-level
        // derivatives can be computed once.
        let shared: Option<Vec<(ParamDual, ParamDual)>> = pooled_theta.map(|theta| {
            let seeded = self.seeded(&theta);
            self.groups.iter().map(|g| self.group_logs(&seeded, g)).collect()
        });
        let per_subject = (0..self.dataset.n_subjects())
            .into_par_iter()
            .map(|s| -> Result<(f64, Vec<f64>)> {
                let total = match &shared {
                    Some(logs) => {
                        let mut total = ParamDual::cst(0.0);
                        for &(g, chosen_b) in &self.subject_terms[s] {
                            total += if chosen_b { logs[g].0 } else { logs[g].1 };
                        }
                        total
                    }
                    None => {
                        let theta = self.subject_theta(base, slots, values, s)?;
                        self.check(&theta)?;
                        self.subject_loglik(&self.seeded(&theta), s)
                    }
                };
                let z = if has_covariates(slots) {
                    Some(self.dataset.covariates(s)?)
                } else {
                    None
                };
                let g = slots
                    .iter()
                    .map(|slot| {
                        let d = total.du[slot.param.index()];
                        match (slot.covariate, z) {
                            (None, _) => d,
                            (Some(c), Some(z)) => d * z[c],
                            (Some(_), None) => unreachable!("covariate slots imply covariates"),
                        }
                    })
                    .collect();
                Ok((total.re, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let values_only: Vec<f64> = per_subject.iter().map(|(v, _)| *v).collect();
        let scores: Vec<Vec<f64>> = per_subject.into_iter().map(|(_, g)| g).collect();
        let gradient = pairwise_sum_vectors(&scores, slots.len());
        Ok(Evaluation {
            loglik: pairwise_sum(&values_only),
            gradient,
            scores: with_scores.then_some(scores),
        })
    }

    fn subject_theta(&self, base: &ParamVector, slots: &[Slot], values: &[f64], subject: usize) -> Result<ParamVector> {
        let mut theta = apply_constants(base, slots, values);
        if has_covariates(slots) {
            let z = self.dataset.covariates(subject)?;
            for (slot, v) in slots.iter().zip(values) {
                if let Some(c) = slot.covariate {
                    let p = theta.get(slot.param);
                    theta.set(slot.param, p + v * z[c]);
                }
            }
        }
        Ok(theta)
    }

    /// Noise parameter of every record, in record order.
    pub fn record_noise(&self) -> &[ParamId] {
        &self.record_noise
    }
}

#[inline]
fn weighted(n: f64, log_p: f64) -> f64 {
    // 0 · ln p is 0 even at a clamped probability
    if n == 0.0 {
        0.0
    } else {
        n * log_p
    }
}

fn has_covariates(slots: &[Slot]) -> bool {
    slots.iter().any(|s| s.covariate.is_some())
}

fn apply_constants(base: &ParamVector, slots: &[Slot], values: &[f64]) -> ParamVector {
    let mut theta = *base;
    for (slot, &v) in slots.iter().zip(values) {
        if slot.covariate.is_none() {
            theta.set(slot.param, v);
        }
    }
    theta
}

/// Linear dependence of parameters on subject covariates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CovariateModel {
    /// Coefficient vector (one entry per dataset covariate) for each
    /// parameter that varies with covariates.
    pub coefficients: BTreeMap<ParamId, Vec<f64>>,
}

/// Sum of record log-likelihoods. With a covariate model, subject `i` is
/// evaluated at `θ + B z_i`.
pub fn dataset_loglik(
    spec: &ModelSpec,
    error: &ErrorSpec,
    theta: &ParamVector,
    dataset: &Dataset,
    covariates: Option<&CovariateModel>,
) -> Result<f64> {
    let engine = LoglikEngine::new(*spec, *error, dataset)?;
    let mut slots = Vec::new();
    let mut values = Vec::new();
    if let Some(model) = covariates {
        let n_cov = dataset.covariate_names().len();
        for (&param, coefs) in &model.coefficients {
            if coefs.len() != n_cov {
                return Err(Error::Dataset(format!(
                    "{} covariate coefficients for `{param}`, dataset has {n_cov} covariates",
                    coefs.len()
                )));
            }
            for (c, &b) in coefs.iter().enumerate() {
                slots.push(Slot {
                    param,
                    covariate: Some(c),
                });
                values.push(b);
            }
        }
    }
    engine.loglik(theta, &slots, &values)
}

//! Maximum likelihood estimation with clustered sandwich standard errors.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::choice::{active_params, ErrorSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{LoglikEngine, Slot};
use crate::model::{ModelSpec, ParamId, ParamVector};
use crate::optimize::{self, fd_hessian, Method, Objective, Options};

/// Reparameterization used by the optimizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    Identity,
    /// `θ = exp(u)`.
    Log,
    /// `θ = exp(u) - 1`, keeping `1 + θ > 0`.
    Log1p,
    /// `θ = lo + (hi - lo) / (1 + exp(-u))`.
    LogitBox {
        lo: f64,
        hi: f64,
    },
}

impl Transform {
    pub fn to_free(self, theta: f64) -> Result<f64> {
        let u = match self {
            Transform::Identity => theta,
            Transform::Log => theta.ln(),
            Transform::Log1p => theta.ln_1p(),
            Transform::LogitBox { lo, hi } => {
                let r = (theta - lo) / (hi - lo);
                (r / (1.0 - r)).ln()
            }
        };
        if u.is_finite() {
            Ok(u)
        } else {
            Err(Error::Optimization(format!(
                "starting value {theta} lies outside the domain of {self:?}"
            )))
        }
    }

    pub fn to_natural(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::Log1p => u.exp_m1(),
            Transform::LogitBox { lo, hi } => lo + (hi - lo) / (1.0 + (-u).exp()),
        }
    }

    /// `dθ/du` at `u`.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log | Transform::Log1p => u.exp(),
            Transform::LogitBox { lo, hi } => {
                let t = self.to_natural(u);
                (t - lo) * (hi - t) / (hi - lo)
            }
        }
    }
}

pub fn default_transform(id: ParamId) -> Transform {
    match id {
        ParamId::Mu | ParamId::MuMpl(_) => Transform::Log,
        ParamId::Delta | ParamId::DeltaLoss | ParamId::Beta | ParamId::BetaLoss => Transform::Log1p,
        _ => Transform::Identity,
    }
}

/// Parameters that vary linearly with the dataset's covariates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CovariateSpec {
    pub params: Vec<ParamId>,
    /// Coefficients held at a constant, by `(parameter, covariate index)`.
    pub fixed: Vec<(Slot, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub spec: ModelSpec,
    pub error: ErrorSpec,
    pub init: ParamVector,
    /// Overrides of [`default_transform`]. Ignored in covariate mode, where
    /// every coordinate is optimized on its natural scale.
    pub transforms: BTreeMap<ParamId, Transform>,
    pub fixed: BTreeMap<ParamId, f64>,
    pub covariates: Option<CovariateSpec>,
    pub optimizer: Options,
    /// Number of starting points; extra starts jitter `init`.
    pub starts: usize,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(spec: ModelSpec, error: ErrorSpec) -> Self {
        Self {
            spec,
            error,
            init: ParamVector::initial(&spec),
            transforms: BTreeMap::new(),
            fixed: BTreeMap::new(),
            covariates: None,
            optimizer: Options::default(),
            starts: 1,
            seed: 0,
        }
    }

    pub fn with_fixed(mut self, id: ParamId, value: f64) -> Self {
        self.fixed.insert(id, value);
        self
    }

    pub fn with_init(mut self, init: ParamVector) -> Self {
        self.init = init;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.optimizer.method = method;
        self
    }

    pub fn transform(&self, slot: &Slot) -> Transform {
        if self.covariates.is_some() || slot.covariate.is_some() {
            return Transform::Identity;
        }
        self.transforms
            .get(&slot.param)
            .copied()
            .unwrap_or_else(|| default_transform(slot.param))
    }

    /// Free slots, followed by fixed nonzero covariate coefficients.
    fn layout(&self, dataset: &Dataset) -> Result<(Vec<Slot>, Vec<(Slot, f64)>)> {
        let active = active_params(&self.spec, &self.error);
        for id in self.fixed.keys() {
            if !active.contains(id) {
                return Err(Error::param(id.name(), "is not a parameter of this specification"));
            }
        }
        let mut free: Vec<Slot> = active
            .iter()
            .filter(|id| !self.fixed.contains_key(id))
            .map(|&id| Slot::constant(id))
            .collect();
        let mut held = Vec::new();
        if let Some(cov) = &self.covariates {
            let n_cov = dataset.covariate_names().len();
            if n_cov == 0 && !cov.params.is_empty() {
                return Err(Error::Dataset("covariate mode needs covariate columns".into()));
            }
            for &(slot, _) in &cov.fixed {
                if slot.covariate.map_or(true, |c| c >= n_cov) || !cov.params.contains(&slot.param) {
                    return Err(Error::param(slot.param.name(), "fixed coefficient does not exist"));
                }
            }
            for &param in &cov.params {
                if !active.contains(&param) {
                    return Err(Error::param(param.name(), "is not a parameter of this specification"));
                }
                for c in 0..n_cov {
                    let slot = Slot {
                        param,
                        covariate: Some(c),
                    };
                    match cov.fixed.iter().find(|(s, _)| *s == slot) {
                        // a zero coefficient drops out of the likelihood entirely
                        Some(&(_, v)) if v == 0.0 => {}
                        Some(&(_, v)) => held.push((slot, v)),
                        None => free.push(slot),
                    }
                }
            }
        }
        Ok((free, held))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub label: String,
    pub slot: Slot,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci95: Option<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub error: ErrorSpec,
    /// Parameter vector at the optimum (covariate coefficients excluded).
    pub theta_hat: ParamVector,
    pub estimates: Vec<Estimate>,
    pub fixed: BTreeMap<ParamId, f64>,
    /// Nonzero covariate coefficients held constant.
    pub held: Vec<(Slot, f64)>,
    pub covariate_names: Vec<String>,
    pub loglik: f64,
    pub vcov_clustered: Option<DMatrix<f64>>,
    pub aic: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Number of free parameters.
    pub k: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Largest gradient component on the optimizer's scale.
    pub gradient_norm: f64,
    /// Largest of `|g_i| max(|θ_i|, 1) / max(|ℓ|, 1)` on the natural scale.
    pub scaled_gradient: f64,
    pub message: String,
}

impl FitResult {
    fn find(&self, id: ParamId) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.slot == Slot::constant(id))
    }

    /// Point estimate of a parameter constant (fixed values included).
    pub fn estimate(&self, id: ParamId) -> f64 {
        self.theta_hat.get(id)
    }

    pub fn se(&self, id: ParamId) -> Option<f64> {
        self.find(id).and_then(|e| e.se)
    }

    pub fn ci95(&self, id: ParamId) -> Option<(f64, f64)> {
        self.find(id).and_then(|e| e.ci95)
    }

    pub fn slots(&self) -> Vec<Slot> {
        self.estimates.iter().map(|e| e.slot).collect()
    }

    pub fn summary(&self, name: &str) -> ModelSummary {
        ModelSummary {
            name: name.to_string(),
            n_obs: self.n_obs,
            n_clusters: self.n_clusters,
            k: self.k,
            loglik: self.loglik,
            aic: self.aic,
            bic: self.bic,
        }
    }
}

pub fn aic(k: usize, loglik: f64) -> f64 {
    2.0 * k as f64 - 2.0 * loglik
}

pub fn bic(k: usize, n_obs: usize, loglik: f64) -> f64 {
    k as f64 * (n_obs as f64).ln() - 2.0 * loglik
}

/// `H⁻¹ G H⁻¹` from the Hessian of the log-likelihood and per-cluster scores.
pub fn sandwich(hessian: &DMatrix<f64>, scores: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = hessian.nrows();
    if scores.len() < 2 {
        return Err(Error::Singular(format!(
            "{} cluster(s): the score outer product is degenerate",
            scores.len()
        )));
    }
    let a = -hessian;
    let a_inv = a
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("information matrix is not invertible".into()))?;
    let mut g = DMatrix::zeros(k, k);
    for s in scores {
        let s = nalgebra::DVector::from_column_slice(s);
        g += &s * s.transpose();
    }
    let v = &a_inv * g * &a_inv;
    Ok((&v + v.transpose()) * 0.5)
}

fn natural_values(config: &FitConfig, slots: &[Slot], u: &[f64]) -> Vec<f64> {
    slots
        .iter()
        .zip(u)
        .map(|(s, &u)| config.transform(s).to_natural(u))
        .collect()
}

struct Problem<'a> {
    engine: LoglikEngine<'a>,
    base: ParamVector,
    slots: Vec<Slot>,
    values_tail: Vec<f64>,
    n_free: usize,
}

impl Problem<'_> {
    fn full(&self, free: &[f64]) -> Vec<f64> {
        free.iter().chain(&self.values_tail).copied().collect()
    }

    /// Log-likelihood and gradient over the free slots on the natural scale.
    fn natural(&self, free: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.engine.evaluate(&self.base, &self.slots, &self.full(free), false)?;
        Ok((e.loglik, e.gradient[..self.n_free].to_vec()))
    }

    fn scores(&self, free: &[f64]) -> Result<Vec<Vec<f64>>> {
        let e = self.engine.evaluate(&self.base, &self.slots, &self.full(free), true)?;
        Ok(e.scores
            .unwrap_or_default()
            .into_iter()
            .map(|s| s[..self.n_free].to_vec())
            .collect())
    }

    fn hessian(&self, free: &[f64]) -> Result<DMatrix<f64>> {
        let f = |x: &[f64]| self.natural(x);
        fd_hessian(&f, free, |v| 1e-4 * (1.0 + v.abs()))
    }
}

/// Fits `config` to `dataset` by maximum likelihood.
pub fn fit(config: &FitConfig, dataset: &Dataset) -> Result<FitResult> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot fit an empty dataset".into()));
    }
    let (free, held) = config.layout(dataset)?;
    let mut base = config.init;
    for (&id, &v) in &config.fixed {
        base.set(id, v);
    }
    let n_free = free.len();
    let mut slots = free.clone();
    slots.extend(held.iter().map(|(s, _)| *s));
    let problem = Problem {
        engine: LoglikEngine::new(config.spec, config.error, dataset)?,
        base,
        slots,
        values_tail: held.iter().map(|(_, v)| *v).collect(),
        n_free,
    };
    let u0 = free
        .iter()
        .map(|s| {
            let v = if s.covariate.is_some() { 0.0 } else { base.get(s.param) };
            config.transform(s).to_free(v)
        })
        .collect::<Result<Vec<f64>>>()?;

    let objective = |u: &[f64]| -> Result<(f64, Vec<f64>)> {
        let x = natural_values(config, &free, u);
        let (ll, g) = problem.natural(&x)?;
        let gu = g
            .iter()
            .zip(&free)
            .zip(u)
            .map(|((g, s), &u)| -g * config.transform(s).derivative(u))
            .collect();
        Ok((-ll, gu))
    };

    let mut best: Option<optimize::Outcome> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for start in 0..config.starts.max(1) {
        let x0: Vec<f64> = if start == 0 {
            u0.clone()
        } else {
            u0.iter()
                .map(|&u| u + 0.1 * rng.sample::<f64, _>(StandardNormal) * u.abs().max(1.0))
                .collect()
        };
        let out = match minimize_checked(&objective, &x0, &config.optimizer) {
            Ok(o) => o,
            Err(e) if start == 0 => return Err(e),
            Err(_) => continue,
        };
        let better = match &best {
            None => true,
            Some(b) => (out.converged, -out.f) > (b.converged, -b.f),
        };
        if better {
            best = Some(out);
        }
    }
    let out = best.expect("the first start either succeeds or returns");
    let values = natural_values(config, &free, &out.x);
    assemble(config, dataset, &problem, &free, &held, &values, &out)
}

fn minimize_checked(obj: &impl Objective, x0: &[f64], opts: &Options) -> Result<optimize::Outcome> {
    obj.eval(x0)
        .map_err(|e| Error::Optimization(format!("initial values are inadmissible: {e}")))?;
    optimize::minimize(obj, x0, opts)
}

fn assemble(
    config: &FitConfig,
    dataset: &Dataset,
    problem: &Problem,
    free: &[Slot],
    held: &[(Slot, f64)],
    values: &[f64],
    out: &optimize::Outcome,
) -> Result<FitResult> {
    let (loglik, grad) = problem.natural(values)?;
    let mut theta_hat = problem.base;
    for (s, &v) in free.iter().zip(values) {
        if s.covariate.is_none() {
            theta_hat.set(s.param, v);
        }
    }
    let scaled_gradient = grad
        .iter()
        .zip(values)
        .map(|(g, v)| g.abs() * v.abs().max(1.0) / loglik.abs().max(1.0))
        .fold(0.0, f64::max);
    let vcov = problem
        .hessian(values)
        .and_then(|h| sandwich(&h, &problem.scores(values)?))
        .ok();
    let names = dataset.covariate_names().to_vec();
    let estimates = free
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let se = vcov
                .as_ref()
                .map(|v| v[(i, i)])
                .filter(|v| *v > 0.0 && v.is_finite())
                .map(f64::sqrt);
            Estimate {
                label: s.label(&names),
                slot: *s,
                estimate: values[i],
                se,
                ci95: se.map(|se| (values[i] - 1.96 * se, values[i] + 1.96 * se)),
            }
        })
        .collect();
    let k = free.len();
    let n_obs = dataset.n_records();
    Ok(FitResult {
        spec: config.spec,
        error: config.error,
        theta_hat,
        estimates,
        fixed: config.fixed.clone(),
        held: held.to_vec(),
        covariate_names: names,
        loglik,
        vcov_clustered: vcov,
        aic: aic(k, loglik),
        bic: bic(k, n_obs, loglik),
        n_obs,
        n_clusters: dataset.n_subjects(),
        k,
        converged: out.converged,
        iterations: out.iterations,
        gradient_norm: out.grad.iter().fold(0.0, |m, g| m.max(g.abs())),
        scaled_gradient,
        message: out.message.clone(),
    })
}

/// Recomputes the clustered covariance of a fit on `dataset`.
pub fn clustered_vcov(fitted: &FitResult, dataset: &Dataset) -> Result<DMatrix<f64>> {
    let free = fitted.slots();
    let values: Vec<f64> = fitted.estimates.iter().map(|e| e.estimate).collect();
    let mut slots = free.clone();
    slots.extend(fitted.held.iter().map(|(s, _)| *s));
    let problem = Problem {
        engine: LoglikEngine::new(fitted.spec, fitted.error, dataset)?,
        base: fitted.theta_hat,
        slots,
        values_tail: fitted.held.iter().map(|(_, v)| *v).collect(),
        n_free: free.len(),
    };
    sandwich(&problem.hessian(&values)?, &problem.scores(&values)?)
}

/// Information criteria of one fitted model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSummary {
    pub name: String,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub k: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranked {
    pub summary: ModelSummary,
    pub delta_bic: f64,
    pub delta_aic: f64,
}

/// Ranks models by BIC, ties broken by AIC.
pub fn compare(models: &[ModelSummary]) -> Result<Vec<Ranked>> {
    if let Some(first) = models.first() {
        if let Some(m) = models.iter().find(|m| m.n_obs != first.n_obs) {
            return Err(Error::Incompatible(format!(
                "`{}` has {} observations, `{}` has {}",
                first.name, first.n_obs, m.name, m.n_obs
            )));
        }
    }
    let mut sorted = models.to_vec();
    sorted.sort_by(|a, b| a.bic.total_cmp(&b.bic).then(a.aic.total_cmp(&b.aic)));
    let (best_bic, best_aic) = sorted.first().map_or((0.0, 0.0), |m| (m.bic, m.aic));
    Ok(sorted
        .into_iter()
        .map(|m| Ranked {
            delta_bic: m.bic - best_bic,
            delta_aic: m.aic - best_aic,
            summary: m,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::catalog::MAIN_MPLS;
    use crate::data::simulate::{simulate, Population};

    fn truth() -> ParamVector {
        ParamVector::baseline(0.6, 0.04, 1.05, 1.1, 1.0)
    }

    fn data(n: usize, seed: u64) -> Dataset {
        simulate(
            &ModelSpec::default(),
            &ErrorSpec::default(),
            &Population::Fixed(truth()),
            n,
            &MAIN_MPLS,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn transforms_invert() {
        for t in [
            Transform::Identity,
            Transform::Log,
            Transform::Log1p,
            Transform::LogitBox { lo: -1.0, hi: 1.0 },
        ] {
            let x = 0.37;
            let u = t.to_free(x).unwrap();
            assert!((t.to_natural(u) - x).abs() < 1e-14);
            let h = 1e-6;
            let fd = (t.to_natural(u + h) - t.to_natural(u - h)) / (2.0 * h);
            assert!((fd - t.derivative(u)).abs() < 1e-8);
        }
        assert!(Transform::Log.to_free(-1.0).is_err());
    }

    #[test]
    fn recovers_truth_on_synthetic_data() {
        let d = data(150, 3);
        let r = fit(&FitConfig::new(ModelSpec::default(), ErrorSpec::default()), &d).unwrap();
        assert!(r.converged, "{}", r.message);
        assert!(r.scaled_gradient <= 1e-4);
        assert_eq!(r.k, 5);
        assert_eq!(r.n_clusters, 150);
        for id in [
            ParamId::Alpha,
            ParamId::Delta,
            ParamId::Gamma,
            ParamId::Lambda,
            ParamId::Mu,
        ] {
            let se = r.se(id).unwrap();
            assert!(
                (r.estimate(id) - truth().get(id)).abs() < 4.0 * se,
                "{id}: {} ± {se}",
                r.estimate(id)
            );
        }
        assert!((r.aic - (10.0 - 2.0 * r.loglik)).abs() < 1e-9);
    }

    #[test]
    fn fixing_gamma_lowers_k_and_loglik() {
        let d = data(100, 5);
        let free = fit(&FitConfig::new(ModelSpec::default(), ErrorSpec::default()), &d).unwrap();
        let held = fit(
            &FitConfig::new(ModelSpec::default(), ErrorSpec::default()).with_fixed(ParamId::Gamma, 1.0),
            &d,
        )
        .unwrap();
        assert_eq!(held.k, free.k - 1);
        assert!(held.loglik <= free.loglik + 1e-9);
        assert_eq!(held.estimate(ParamId::Gamma), 1.0);
        assert!(held.se(ParamId::Gamma).is_none());
    }

    #[test]
    fn reproducible() {
        let d = data(60, 9);
        let c = FitConfig::new(ModelSpec::default(), ErrorSpec::default());
        let a = fit(&c, &d).unwrap();
        let b = fit(&c, &d).unwrap();
        assert_eq!(a.loglik.to_bits(), b.loglik.to_bits());
        assert_eq!(a.estimates, b.estimates);
    }

    #[test]
    fn compare_ranks_and_checks_sizes() {
        let m = |name: &str, n, k, ll: f64| ModelSummary {
            name: name.into(),
            n_obs: n,
            n_clusters: 1,
            k,
            loglik: ll,
            aic: aic(k, ll),
            bic: bic(k, n, ll),
        };
        let ranked = compare(&[m("big", 1000, 6, -500.0), m("small", 1000, 5, -500.5)]).unwrap();
        assert_eq!(ranked[0].summary.name, "small");
        assert_eq!(ranked[0].delta_bic, 0.0);
        assert!(ranked[1].delta_bic > 0.0);
        assert!(compare(&[m("a", 10, 1, -1.0), m("b", 11, 1, -1.0)]).is_err());
        assert!(compare(&[]).unwrap().is_empty());
    }

    #[test]
    fn single_cluster_has_no_sandwich() {
        let d = data(1, 2);
        let r = fit(&FitConfig::new(ModelSpec::default(), ErrorSpec::default()), &d).unwrap();
        assert!(r.vcov_clustered.is_none());
        assert!(clustered_vcov(&r, &d).is_err());
    }

    #[test]
    fn fixing_an_inactive_parameter_is_rejected() {
        let d = data(5, 2);
        let c = FitConfig::new(ModelSpec::default(), ErrorSpec::default()).with_fixed(ParamId::Zeta, 1.0);
        assert!(fit(&c, &d).is_err());
    }
}

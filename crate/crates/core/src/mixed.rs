//! Joint-normal population distribution of (α, δ, γ, λ, μ) and its
//! simulated maximum likelihood estimator.

use nalgebra::{DMatrix, DVector, Matrix5, Vector5};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::choice::{active_params, log_prob_kernel, ErrorSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{aic, bic, fit, sandwich, FitConfig};
use crate::model::{prospect_utility_with, signed_value, ModelSpec, ParamId, ParamVector};
use crate::numeric::{normal_cdf, normal_quantile, pairwise_sum, pairwise_sum_vectors};
use crate::optimize::{fd_hessian, minimize, Options};
use crate::scalar::{Dual, Scalar};

/// Random parameters, in the order used by every vector and matrix here.
pub const MIXED_PARAMS: [ParamId; 5] = [
    ParamId::Alpha,
    ParamId::Delta,
    ParamId::Gamma,
    ParamId::Lambda,
    ParamId::Mu,
];

/// Draws of μ are floored here before entering the choice probability.
pub const MU_FLOOR: f64 = 1e-6;

pub(crate) fn slot_of(param: ParamId) -> Option<usize> {
    MIXED_PARAMS.iter().position(|&p| p == param)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionParams {
    pub mean: [f64; 5],
    /// Lower-triangular Cholesky factor of the covariance matrix.
    pub chol: [[f64; 5]; 5],
}

impl DistributionParams {
    pub fn new(mean: [f64; 5], chol: [[f64; 5]; 5]) -> Result<Self> {
        for i in 0..5 {
            if !(chol[i][i] > 0.0) {
                return Err(Error::param("chol", format!("diagonal entry {i} must be positive")));
            }
            for j in i + 1..5 {
                if chol[i][j] != 0.0 {
                    return Err(Error::param("chol", "factor must be lower triangular"));
                }
            }
        }
        if mean.iter().chain(chol.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::param("distribution", "non-finite entry"));
        }
        Ok(Self { mean, chol })
    }

    /// Independent marginals with the given standard deviations.
    pub fn diagonal(mean: [f64; 5], sds: [f64; 5]) -> Result<Self> {
        let mut chol = [[0.0; 5]; 5];
        for i in 0..5 {
            chol[i][i] = sds[i];
        }
        Self::new(mean, chol)
    }

    /// From standard deviations and a correlation matrix.
    pub fn from_sds_corr(mean: [f64; 5], sds: [f64; 5], corr: [[f64; 5]; 5]) -> Result<Self> {
        let cov = Matrix5::from_fn(|i, j| sds[i] * sds[j] * corr[i][j]);
        let l = cov
            .cholesky()
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?
            .l();
        Self::new(mean, std::array::from_fn(|i| std::array::from_fn(|j| l[(i, j)])))
    }

    pub fn chol_matrix(&self) -> Matrix5<f64> {
        Matrix5::from_fn(|i, j| self.chol[i][j])
    }

    pub fn vcov(&self) -> Matrix5<f64> {
        let l = self.chol_matrix();
        l * l.transpose()
    }

    pub fn sds(&self) -> [f64; 5] {
        let v = self.vcov();
        std::array::from_fn(|i| v[(i, i)].sqrt())
    }

    /// Subject parameters at the standard-normal point `z`.
    pub fn theta_at(&self, base: &ParamVector, z: &[f64; 5]) -> ParamVector {
        let x = Vector5::from(self.mean) + self.chol_matrix() * Vector5::from(*z);
        let mut theta = *base;
        for (k, &p) in MIXED_PARAMS.iter().enumerate() {
            theta.set(p, x[k]);
        }
        theta.mu = theta.mu.max(MU_FLOOR);
        theta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DrawScheme {
    /// Halton sequences in bases 2, 3, 5, 7, 11 after a burn-in of 50,
    /// randomized per subject by a seeded uniform shift modulo 1.
    #[default]
    ShuffledHalton,
    PseudoRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DrawPlan {
    pub n_draws: usize,
    pub scheme: DrawScheme,
    pub seed: u64,
}

impl Default for DrawPlan {
    fn default() -> Self {
        Self {
            n_draws: 1000,
            scheme: DrawScheme::ShuffledHalton,
            seed: 0,
        }
    }
}

const HALTON_PRIMES: [u64; 5] = [2, 3, 5, 7, 11];
const HALTON_BURN_IN: u64 = 50;

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while n > 0 {
        out += (n % base) as f64 * inv;
        n /= base;
        inv /= base as f64;
    }
    out
}

impl DrawPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws < 64 {
            return Err(Error::param(
                "n_draws",
                format!("{} is below the minimum of 64", self.n_draws),
            ));
        }
        Ok(())
    }

    /// Standard-normal draws of subject `subject`, one 5-vector per draw.
    pub fn subject_draws(&self, subject: usize) -> Vec<[f64; 5]> {
        let mut rng = crate::data::simulate::subject_rng(self.seed, subject);
        match self.scheme {
            DrawScheme::PseudoRandom => (0..self.n_draws)
                .map(|_| std::array::from_fn(|_| rng.sample(StandardNormal)))
                .collect(),
            DrawScheme::ShuffledHalton => {
                let shift: [f64; 5] = std::array::from_fn(|_| rng.gen::<f64>());
                (0..self.n_draws as u64)
                    .map(|r| {
                        std::array::from_fn(|d| {
                            let u = (radical_inverse(HALTON_BURN_IN + r + 1, HALTON_PRIMES[d]) + shift[d]).fract();
                            normal_quantile(u.clamp(1e-12, 1.0 - 1e-12))
                        })
                    })
                    .collect()
            }
        }
    }
}

/// Number of free coordinates: 5 means and 15 Cholesky entries.
pub const N_COORDS: usize = 20;

/// Row-major positions `(i, j)`, `j <= i`, of the Cholesky coordinates.
fn chol_positions() -> impl Iterator<Item = (usize, usize)> {
    (0..5).flat_map(|i| (0..=i).map(move |j| (i, j)))
}

impl DistributionParams {
    /// Optimizer coordinates: means, then the Cholesky factor row by row
    /// with logarithms on the diagonal.
    pub fn to_coords(&self) -> Vec<f64> {
        let mut v = self.mean.to_vec();
        v.extend(chol_positions().map(|(i, j)| if i == j { self.chol[i][i].ln() } else { self.chol[i][j] }));
        v
    }

    pub fn from_coords(v: &[f64]) -> Self {
        let mut chol = [[0.0; 5]; 5];
        for ((i, j), &x) in chol_positions().zip(&v[5..]) {
            chol[i][j] = if i == j { x.exp() } else { x };
        }
        Self {
            mean: std::array::from_fn(|k| v[k]),
            chol,
        }
    }

    pub fn coord_labels() -> Vec<String> {
        let mut out: Vec<String> = MIXED_PARAMS.iter().map(|p| format!("mean_{p}")).collect();
        out.extend(chol_positions().map(|(i, j)| {
            let l = format!("chol_{}_{}", MIXED_PARAMS[i], MIXED_PARAMS[j]);
            if i == j {
                format!("log_{l}")
            } else {
                l
            }
        }));
        out
    }
}

pub fn correlations(law: &DistributionParams) -> Matrix5<f64> {
    let v = law.vcov();
    Matrix5::from_fn(|i, j| {
        if i == j {
            1.0
        } else {
            (v[(i, j)] / (v[(i, i)] * v[(j, j)]).sqrt()).clamp(-1.0, 1.0)
        }
    })
}

/// Population share with `param` above `threshold` under the marginal normal.
pub fn share_above(law: &DistributionParams, param: ParamId, threshold: f64) -> Result<f64> {
    let k = slot_of(param).ok_or_else(|| Error::param(param.name(), "is not a random parameter"))?;
    let m = law.mean[k];
    let sd = law.sds()[k];
    Ok(if sd == 0.0 {
        match m.partial_cmp(&threshold) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        }
    } else {
        normal_cdf((m - threshold) / sd)
    })
}

type Dual5 = Dual<5>;

/// Precomputed simulated likelihood over a dataset.
pub struct SimulatedLikelihood<'a> {
    spec: ModelSpec,
    error: ErrorSpec,
    base: ParamVector,
    dataset: &'a Dataset,
    draws: Vec<Vec<[f64; 5]>>,
    terms: Vec<Vec<(usize, bool)>>,
    /// Sorted distinct nonzero amounts each subject's designs pay.
    amounts: Vec<Vec<f64>>,
}

impl<'a> SimulatedLikelihood<'a> {
    pub fn new(
        spec: ModelSpec,
        error: ErrorSpec,
        base: ParamVector,
        dataset: &'a Dataset,
        plan: &DrawPlan,
    ) -> Result<Self> {
        plan.validate()?;
        check_mixed_spec(&spec, &error)?;
        let draws = (0..dataset.n_subjects())
            .into_par_iter()
            .map(|s| plan.subject_draws(s))
            .collect();
        let terms = dataset
            .clusters()
            .iter()
            .map(|recs| {
                recs.iter()
                    .map(|&r| (dataset.records()[r].design, dataset.records()[r].chosen_b))
                    .collect()
            })
            .collect::<Vec<Vec<(usize, bool)>>>();
        let amounts = terms
            .iter()
            .map(|t| {
                let mut a: Vec<f64> = t
                    .iter()
                    .flat_map(|&(d, _)| {
                        let design = &dataset.designs()[d];
                        [&design.option_a, &design.option_b]
                            .into_iter()
                            .flat_map(|p| p.branches())
                            .flat_map(|b| b.stream.payments())
                            .map(|p| p.amount)
                            .filter(|&x| x != 0.0)
                            .collect::<Vec<_>>()
                    })
                    .collect();
                a.sort_by(f64::total_cmp);
                a.dedup();
                a
            })
            .collect();
        Ok(Self {
            spec,
            error,
            base,
            dataset,
            draws,
            terms,
            amounts,
        })
    }

    fn draw_theta<S: Scalar>(
        &self,
        law: &DistributionParams,
        z: &[f64; 5],
        seed: impl Fn(usize, f64) -> S,
    ) -> ParamVector<S> {
        let mut theta = ParamVector::<S>::lift(&self.base);
        for k in 0..5 {
            let mut x = law.mean[k];
            for j in 0..=k {
                x += law.chol[k][j] * z[j];
            }
            theta.set(MIXED_PARAMS[k], seed(k, x));
        }
        theta.mu = theta.mu.floor_at(MU_FLOOR);
        theta
    }

    fn draw_loglik<S: Scalar>(&self, theta: &ParamVector<S>, subject: usize) -> S {
        let amounts = &self.amounts[subject];
        let table: Vec<S> = amounts
            .iter()
            .map(|&x| signed_value(&self.spec.utility, theta, x))
            .collect();
        let value = |x: f64| table[amounts.binary_search_by(|a| a.total_cmp(&x)).expect("tabulated amount")];
        let mut total = S::cst(0.0);
        for &(d, chosen_b) in &self.terms[subject] {
            let design = &self.dataset.designs()[d];
            let du = prospect_utility_with(&self.spec, theta, &design.option_b, &value)
                - prospect_utility_with(&self.spec, theta, &design.option_a, &value);
            total += log_prob_kernel(&self.error, du, theta, ParamId::Mu, chosen_b);
        }
        total
    }

    /// `ln P_i` of one subject.
    pub fn subject_logprob(&self, law: &DistributionParams, subject: usize) -> Result<f64> {
        let lls: Vec<f64> = self.draws[subject]
            .iter()
            .map(|z| self.draw_loglik(&self.draw_theta(law, z, |_, x| x), subject))
            .collect();
        log_mean_exp(&lls)
    }

    /// `ln P_i` and its gradient with respect to the optimizer coordinates.
    fn subject_logprob_grad(&self, law: &DistributionParams, subject: usize) -> Result<(f64, Vec<f64>)> {
        let z = &self.draws[subject];
        let per_draw: Vec<Dual5> = z
            .iter()
            .map(|z| self.draw_loglik(&self.draw_theta(law, z, |k, x| Dual5::variable(x, k)), subject))
            .collect();
        let values: Vec<f64> = per_draw.iter().map(|d| d.re).collect();
        let lp = log_mean_exp(&values)?;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
        let total = pairwise_sum(&weights);
        let mut grad = vec![0.0; N_COORDS];
        for ((w, d), z) in weights.iter().zip(&per_draw).zip(z) {
            let w = w / total;
            for k in 0..5 {
                grad[k] += w * d.du[k];
            }
            for (c, (i, j)) in chol_positions().enumerate() {
                grad[5 + c] += w * d.du[i] * z[j];
            }
        }
        for (c, (i, j)) in chol_positions().enumerate() {
            if i == j {
                grad[5 + c] *= law.chol[i][i];
            }
        }
        Ok((lp, grad))
    }

    /// Simulated log-likelihood.
    pub fn loglik(&self, law: &DistributionParams) -> Result<f64> {
        let per: Vec<f64> = (0..self.dataset.n_subjects())
            .into_par_iter()
            .map(|s| self.subject_logprob(law, s))
            .collect::<Result<_>>()?;
        Ok(pairwise_sum(&per))
    }

    /// Log-likelihood, gradient and per-subject scores in optimizer coordinates.
    pub fn evaluate(&self, coords: &[f64]) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        let law = DistributionParams::from_coords(coords);
        let per: Vec<(f64, Vec<f64>)> = (0..self.dataset.n_subjects())
            .into_par_iter()
            .map(|s| self.subject_logprob_grad(&law, s))
            .collect::<Result<_>>()?;
        let values: Vec<f64> = per.iter().map(|(v, _)| *v).collect();
        let scores: Vec<Vec<f64>> = per.into_iter().map(|(_, g)| g).collect();
        Ok((pairwise_sum(&values), pairwise_sum_vectors(&scores, N_COORDS), scores))
    }
}

fn log_mean_exp(values: &[f64]) -> Result<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::domain("simulated choice probability is not finite"));
    }
    let shifted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let lp = max + (pairwise_sum(&shifted) / values.len() as f64).ln();
    if lp.is_finite() {
        Ok(lp)
    } else {
        Err(Error::domain("simulated choice probability is not finite"))
    }
}

fn check_mixed_spec(spec: &ModelSpec, error: &ErrorSpec) -> Result<()> {
    let active = active_params(spec, error);
    let mut expected = MIXED_PARAMS.to_vec();
    expected.sort();
    if active != expected {
        return Err(Error::Incompatible(format!(
            "the random-parameter model covers exactly (alpha, delta, gamma, lambda, mu); \
             this specification estimates {}",
            active.iter().map(|p| p.name()).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}

/// Probability of all of one subject's observed choices, integrated over the
/// population law by simulation.
pub fn subject_prob(
    spec: &ModelSpec,
    error: &ErrorSpec,
    law: &DistributionParams,
    dataset: &Dataset,
    subject: usize,
    plan: &DrawPlan,
) -> Result<f64> {
    if dataset.clusters().get(subject).map_or(true, |c| c.is_empty()) {
        return Err(Error::Dataset(format!("subject {subject} has no records")));
    }
    let sim = SimulatedLikelihood::new(*spec, *error, ParamVector::initial(spec), dataset, plan)?;
    Ok(sim.subject_logprob(law, subject)?.exp())
}

#[derive(Clone, Debug)]
pub struct MixedFit {
    pub law: DistributionParams,
    pub loglik: f64,
    /// Estimates in optimizer coordinates, labelled by [`DistributionParams::coord_labels`].
    pub coords: Vec<f64>,
    pub vcov_coords: Option<DMatrix<f64>>,
    pub mean_se: [Option<f64>; 5],
    pub sds: [f64; 5],
    pub sd_se: [Option<f64>; 5],
    pub correlations: Matrix5<f64>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub k: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub message: String,
    pub plan: DrawPlan,
}

impl MixedFit {
    pub fn vcov(&self) -> Matrix5<f64> {
        self.law.vcov()
    }
}

/// Initial law: the given means with standard deviations at 20% of each
/// mean's magnitude and no correlation.
pub fn initial_law(means: [f64; 5]) -> DistributionParams {
    let sds = means.map(|m| (0.2 * m.abs()).max(1e-3));
    DistributionParams::diagonal(means, sds).expect("positive diagonal")
}

/// Simulated maximum likelihood over the population law. Without `init`
/// the means start at an aggregate fit.
pub fn fit_distribution(
    spec: &ModelSpec,
    error: &ErrorSpec,
    dataset: &Dataset,
    plan: &DrawPlan,
    init: Option<DistributionParams>,
    options: &Options,
) -> Result<MixedFit> {
    check_mixed_spec(spec, error)?;
    if dataset.n_subjects() < 30 {
        return Err(Error::Dataset(format!(
            "distribution estimation needs at least 30 subjects, got {}",
            dataset.n_subjects()
        )));
    }
    let base = ParamVector::initial(spec);
    let init = match init {
        Some(law) => law,
        None => {
            let agg = fit(&FitConfig::new(*spec, *error), dataset)?;
            initial_law(MIXED_PARAMS.map(|p| agg.estimate(p)))
        }
    };
    let sim = SimulatedLikelihood::new(*spec, *error, base, dataset, plan)?;
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (ll, g, _) = sim.evaluate(x)?;
        Ok((-ll, g.iter().map(|v| -v).collect()))
    };
    let out = minimize(&objective, &init.to_coords(), options)?;
    let (loglik, _, scores) = sim.evaluate(&out.x)?;
    let grad_fn = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (ll, g, _) = sim.evaluate(x)?;
        Ok((ll, g))
    };
    let vcov = fd_hessian(&grad_fn, &out.x, |v| 1e-4 * (1.0 + v.abs()))
        .and_then(|h| sandwich(&h, &scores))
        .ok();
    let law = DistributionParams::from_coords(&out.x);
    let se_of = |jac: &[f64]| -> Option<f64> {
        let v = vcov.as_ref()?;
        let j = DVector::from_column_slice(jac);
        let var = (j.transpose() * v * &j)[(0, 0)];
        (var > 0.0 && var.is_finite()).then(|| var.sqrt())
    };
    let mean_se = std::array::from_fn(|k| {
        let mut e = vec![0.0; N_COORDS];
        e[k] = 1.0;
        se_of(&e)
    });
    let sds = law.sds();
    let sd_se = std::array::from_fn(|k| {
        let jac: Vec<f64> = (0..N_COORDS)
            .map(|c| {
                let h = 1e-6 * (1.0 + out.x[c].abs());
                let mut p = out.x.clone();
                let mut m = out.x.clone();
                p[c] += h;
                m[c] -= h;
                (DistributionParams::from_coords(&p).sds()[k] - DistributionParams::from_coords(&m).sds()[k])
                    / (2.0 * h)
            })
            .collect();
        se_of(&jac)
    });
    let n_obs = dataset.n_records();
    Ok(MixedFit {
        correlations: correlations(&law),
        law,
        loglik,
        coords: out.x.clone(),
        vcov_coords: vcov,
        mean_se,
        sds,
        sd_se,
        n_obs,
        n_clusters: dataset.n_subjects(),
        k: N_COORDS,
        aic: aic(N_COORDS, loglik),
        bic: bic(N_COORDS, n_obs, loglik),
        converged: out.converged,
        iterations: out.iterations,
        gradient_norm: out.grad.iter().fold(0.0, |m, g| m.max(g.abs())),
        message: out.message,
        plan: *plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::catalog::MAIN_MPLS;
    use crate::data::simulate::{simulate, Population};
    use crate::likelihood::dataset_loglik;

    fn small_data() -> Dataset {
        simulate(
            &ModelSpec::default(),
            &ErrorSpec::default(),
            &Population::Fixed(ParamVector::baseline(0.55, 0.04, 1.06, 1.1, 1.0)),
            40,
            &MAIN_MPLS,
            4,
        )
        .unwrap()
    }

    #[test]
    fn share_above_reference_values() {
        let law = DistributionParams::diagonal([0.5, 0.04, 1.0639, 1.1, 1.0], [0.1, 0.01, 0.0519, 0.1, 0.2]).unwrap();
        let s = share_above(&law, ParamId::Gamma, 1.0).unwrap();
        assert!((s - 0.891).abs() < 0.002, "{s}");
        assert!((share_above(&law, ParamId::Alpha, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(share_above(&law, ParamId::Zeta, 1.0).is_err());
        let mut tight = law.clone();
        tight.chol[2][2] = 1e-300;
        assert_eq!(share_above(&tight, ParamId::Gamma, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn correlations_of_known_law() {
        let mut corr = [[0.0; 5]; 5];
        for (i, row) in corr.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        corr[2][3] = 0.48;
        corr[3][2] = 0.48;
        let law = DistributionParams::from_sds_corr([0.0; 5], [0.18, 0.036, 0.05, 0.16, 0.3], corr).unwrap();
        let r = correlations(&law);
        assert!((r[(2, 3)] - 0.48).abs() < 1e-12);
        assert!(r[(0, 1)].abs() < 1e-12);
        for i in 0..5 {
            assert_eq!(r[(i, i)], 1.0);
            assert!((law.sds()[i] - [0.18, 0.036, 0.05, 0.16, 0.3][i]).abs() < 1e-12);
        }
        let diag = DistributionParams::diagonal([0.0; 5], [1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(correlations(&diag), Matrix5::identity());
    }

    #[test]
    fn coordinates_round_trip() {
        let law = DistributionParams::from_sds_corr(
            [0.5, 0.04, 1.06, 1.1, 1.0],
            [0.18, 0.036, 0.05, 0.16, 0.3],
            std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.2 })),
        )
        .unwrap();
        let back = DistributionParams::from_coords(&law.to_coords());
        for i in 0..5 {
            for j in 0..5 {
                assert!((back.chol[i][j] - law.chol[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!(DistributionParams::coord_labels().len(), N_COORDS);
    }

    #[test]
    fn draws_are_deterministic_and_normal() {
        let plan = DrawPlan {
            n_draws: 2000,
            ..DrawPlan::default()
        };
        let a = plan.subject_draws(3);
        assert_eq!(a, plan.subject_draws(3));
        assert_ne!(a, plan.subject_draws(4));
        for d in 0..5 {
            let m: f64 = a.iter().map(|z| z[d]).sum::<f64>() / 2000.0;
            let v: f64 = a.iter().map(|z| (z[d] - m).powi(2)).sum::<f64>() / 2000.0;
            assert!(m.abs() < 0.03 && (v - 1.0).abs() < 0.05, "dim {d}: {m} {v}");
        }
        assert!(DrawPlan { n_draws: 10, ..plan }.validate().is_err());
    }

    #[test]
    fn degenerate_law_collapses_to_aggregate() {
        let d = small_data();
        let mean = [0.55, 0.04, 1.06, 1.1, 1.0];
        let law = DistributionParams::diagonal(mean, [1e-12; 5]).unwrap();
        let plan = DrawPlan {
            n_draws: 64,
            ..DrawPlan::default()
        };
        let sim = SimulatedLikelihood::new(
            ModelSpec::default(),
            ErrorSpec::default(),
            ParamVector::initial(&ModelSpec::default()),
            &d,
            &plan,
        )
        .unwrap();
        let theta = ParamVector::baseline(0.55, 0.04, 1.06, 1.1, 1.0);
        let agg = dataset_loglik(&ModelSpec::default(), &ErrorSpec::default(), &theta, &d, None).unwrap();
        let simulated = sim.loglik(&law).unwrap();
        assert!((simulated - agg).abs() <= 1e-6 * agg.abs(), "{simulated} vs {agg}");
        let p = subject_prob(&ModelSpec::default(), &ErrorSpec::default(), &law, &d, 0, &plan).unwrap();
        assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = small_data().filter_subjects(|id| id < "s0006");
        let plan = DrawPlan {
            n_draws: 64,
            ..DrawPlan::default()
        };
        let law = DistributionParams::from_sds_corr(
            [0.55, 0.04, 1.06, 1.1, 1.0],
            [0.1, 0.02, 0.05, 0.1, 0.2],
            std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.1 })),
        )
        .unwrap();
        let sim = SimulatedLikelihood::new(
            ModelSpec::default(),
            ErrorSpec::default(),
            ParamVector::initial(&ModelSpec::default()),
            &d,
            &plan,
        )
        .unwrap();
        let x = law.to_coords();
        let (_, g, _) = sim.evaluate(&x).unwrap();
        for c in 0..N_COORDS {
            let h = 1e-6;
            let mut p = x.clone();
            let mut m = x.clone();
            p[c] += h;
            m[c] -= h;
            let fd = (sim.evaluate(&p).unwrap().0 - sim.evaluate(&m).unwrap().0) / (2.0 * h);
            assert!(
                (fd - g[c]).abs() < 1e-5 * (1.0 + g[c].abs()),
                "coord {c}: {fd} vs {}",
                g[c]
            );
        }
    }

    #[test]
    fn rejects_unsupported_specs() {
        let d = small_data();
        let e = ErrorSpec {
            tremble: true,
            ..Default::default()
        };
        let r = fit_distribution(
            &ModelSpec::default(),
            &e,
            &d,
            &DrawPlan::default(),
            None,
            &Options::default(),
        );
        assert!(matches!(r, Err(Error::Incompatible(_))));
    }
}

//! Stochastic choice: Fechner noise with a logit or probit link, optional
//! trembles, and per-record log-likelihood contributions.

use crate::dataset::{ChoiceRecord, Dataset};
use crate::error::{Error, Result};
use crate::model::{check_spec_params, prospect_utility_kernel, ModelSpec, ParamId, ParamVector};
use crate::numeric::{normal_cdf, normal_pdf};
use crate::scalar::Scalar;

/// Probabilities are clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Link {
    #[default]
    Logit,
    Probit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ErrorSpec {
    pub link: Link,
    pub tremble: bool,
    /// One Fechner parameter per MPL 1..=7 instead of a common `mu`.
    pub per_mpl_mu: bool,
}

impl ErrorSpec {
    pub fn active_params(&self) -> Vec<ParamId> {
        let mut ids = if self.per_mpl_mu {
            (1..=7).map(ParamId::MuMpl).collect()
        } else {
            vec![ParamId::Mu]
        };
        if self.tremble {
            ids.push(ParamId::Kappa);
        }
        ids
    }

    /// Noise parameter governing choices from `mpl_id`. The long-horizon
    /// lists reuse their four-week counterparts: MPL8 uses `mu_4` and MPL9
    /// uses `mu_6`.
    pub fn noise_param(&self, mpl_id: u8) -> Result<ParamId> {
        if !self.per_mpl_mu {
            return Ok(ParamId::Mu);
        }
        match mpl_id {
            1..=7 => Ok(ParamId::MuMpl(mpl_id)),
            8 => Ok(ParamId::MuMpl(4)),
            9 => Ok(ParamId::MuMpl(6)),
            other => Err(Error::Dataset(format!(
                "per-MPL noise needs MPL ids in 1..=9, got {other}"
            ))),
        }
    }
}

/// Structural and error parameters estimated under `(spec, error)`.
pub fn active_params(spec: &ModelSpec, error: &ErrorSpec) -> Vec<ParamId> {
    let mut ids = spec.active_params();
    ids.extend(error.active_params());
    ids.sort();
    ids
}

/// Link CDF value and density at `xi`.
#[inline]
pub(crate) fn link_cdf(link: Link, xi: f64) -> (f64, f64) {
    match link {
        Link::Logit => {
            let p = if xi >= 0.0 {
                1.0 / (1.0 + (-xi).exp())
            } else {
                let e = xi.exp();
                e / (1.0 + e)
            };
            (p, p * (1.0 - p))
        }
        Link::Probit => (normal_cdf(xi), normal_pdf(xi)),
    }
}

/// `(P(B), P(A))` for a utility difference `du = U(B) - U(A)`. Both are
/// computed from the symmetric link so neither loses precision in the tails.
#[inline]
pub(crate) fn choice_probs_kernel<S: Scalar>(
    error: &ErrorSpec,
    du: S,
    theta: &ParamVector<S>,
    noise: ParamId,
) -> (S, S) {
    let mu = theta.get(noise);
    let xi = du / mu;
    let x = xi.re();
    let (fb, db) = link_cdf(error.link, x);
    let (fa, da) = link_cdf(error.link, -x);
    let pb = xi.chain(fb, db);
    let pa = xi.chain(fa, -da);
    if error.tremble {
        let k = theta.kappa.abs();
        let keep = -k + 1.0;
        let half = k * 0.5;
        (keep * pb + half, keep * pa + half)
    } else {
        (pb, pa)
    }
}

/// `(ln P(B), ln P(A))` after clamping.
#[inline]
pub(crate) fn log_probs_kernel<S: Scalar>(error: &ErrorSpec, du: S, theta: &ParamVector<S>, noise: ParamId) -> (S, S) {
    let (pb, pa) = choice_probs_kernel(error, du, theta, noise);
    (
        pb.clamp_to(PROB_FLOOR, 1.0 - PROB_FLOOR).ln(),
        pa.clamp_to(PROB_FLOOR, 1.0 - PROB_FLOOR).ln(),
    )
}

/// `ln P(chosen)` after clamping, computing only the chosen side.
#[inline]
pub(crate) fn log_prob_kernel<S: Scalar>(
    error: &ErrorSpec,
    du: S,
    theta: &ParamVector<S>,
    noise: ParamId,
    chosen_b: bool,
) -> S {
    let xi = if chosen_b { du } else { -du } / theta.get(noise);
    let (f, d) = link_cdf(error.link, xi.re());
    let mut p = xi.chain(f, d);
    if error.tremble {
        let k = theta.kappa.abs();
        p = (-k + 1.0) * p + k * 0.5;
    }
    p.clamp_to(PROB_FLOOR, 1.0 - PROB_FLOOR).ln()
}

fn check_error_params(error: &ErrorSpec, theta: &ParamVector, noise: ParamId) -> Result<()> {
    let mut ids = vec![noise];
    if error.tremble {
        ids.push(ParamId::Kappa);
    }
    theta.check(&ids)
}

/// Probability of choosing option B given the utility difference
/// `delta_u = U(B) - U(A)`.
pub fn choice_prob(error: &ErrorSpec, delta_u: f64, theta: &ParamVector, mpl_id: u8) -> Result<f64> {
    let noise = error.noise_param(mpl_id)?;
    check_error_params(error, theta, noise)?;
    if delta_u.is_nan() {
        return Err(Error::domain("utility difference is NaN"));
    }
    Ok(choice_probs_kernel(error, delta_u, theta, noise).0)
}

/// Log-likelihood contribution of one observed choice.
pub fn record_loglik(
    spec: &ModelSpec,
    error: &ErrorSpec,
    theta: &ParamVector,
    dataset: &Dataset,
    record: &ChoiceRecord,
) -> Result<f64> {
    check_spec_params(spec, theta)?;
    let noise = error.noise_param(record.mpl_id)?;
    check_error_params(error, theta, noise)?;
    let design = dataset.design(record);
    let du =
        prospect_utility_kernel(spec, theta, &design.option_b) - prospect_utility_kernel(spec, theta, &design.option_a);
    let (lb, la) = log_probs_kernel(error, du, theta, noise);
    Ok(if record.chosen_b { lb } else { la })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_mu(mu: f64) -> ParamVector {
        ParamVector {
            mu,
            ..ParamVector::neutral()
        }
    }

    #[test]
    fn indifference_is_a_coin_flip() {
        for link in [Link::Logit, Link::Probit] {
            let e = ErrorSpec {
                link,
                ..Default::default()
            };
            assert_eq!(choice_prob(&e, 0.0, &theta_mu(3.7), 1).unwrap(), 0.5);
        }
    }

    #[test]
    fn logistic_reference_value() {
        let p = choice_prob(&ErrorSpec::default(), 2.0, &theta_mu(2.0), 1).unwrap();
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn full_tremble_randomizes() {
        let e = ErrorSpec {
            tremble: true,
            ..Default::default()
        };
        let mut th = theta_mu(0.1);
        th.kappa = 1.0;
        for du in [-50.0, -1.0, 0.0, 3.0, 1e4] {
            assert_eq!(choice_prob(&e, du, &th, 2).unwrap(), 0.5);
        }
        th.kappa = -1.0;
        assert_eq!(choice_prob(&e, 7.0, &th, 2).unwrap(), 0.5);
    }

    #[test]
    fn rejects_nonpositive_noise() {
        assert!(choice_prob(&ErrorSpec::default(), 1.0, &theta_mu(0.0), 1).is_err());
        assert!(choice_prob(&ErrorSpec::default(), 1.0, &theta_mu(-2.0), 1).is_err());
    }

    #[test]
    fn extreme_arguments_stay_finite() {
        for link in [Link::Logit, Link::Probit] {
            let e = ErrorSpec {
                link,
                ..Default::default()
            };
            let hi = choice_prob(&e, 1e4, &theta_mu(1.0), 1).unwrap();
            let lo = choice_prob(&e, -1e4, &theta_mu(1.0), 1).unwrap();
            assert_eq!(hi, 1.0);
            assert!(lo >= 0.0 && lo < 1e-300);
        }
    }

    #[test]
    fn per_mpl_noise_mapping() {
        let e = ErrorSpec {
            per_mpl_mu: true,
            ..Default::default()
        };
        assert_eq!(e.noise_param(3).unwrap(), ParamId::MuMpl(3));
        assert_eq!(e.noise_param(8).unwrap(), ParamId::MuMpl(4));
        assert_eq!(e.noise_param(9).unwrap(), ParamId::MuMpl(6));
        assert!(e.noise_param(10).is_err());
        let mut th = theta_mu(1.0);
        th.mu_mpl[2] = 100.0;
        let p3 = choice_prob(&e, 1.0, &th, 3).unwrap();
        let p2 = choice_prob(&e, 1.0, &th, 2).unwrap();
        assert!(p3 < p2);
    }

    #[test]
    fn noise_limits() {
        let e = ErrorSpec::default();
        let p = choice_prob(&e, 5.0, &theta_mu(1e8), 1).unwrap();
        assert!((p - 0.5).abs() < 1e-6);
        assert_eq!(choice_prob(&e, 5.0, &theta_mu(1e-9), 1).unwrap(), 1.0);
        assert_eq!(choice_prob(&e, -5.0, &theta_mu(1e-9), 1).unwrap(), 0.0);
    }
}

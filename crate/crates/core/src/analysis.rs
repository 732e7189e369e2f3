//! Indifference principals and the borrowing premium.

use crate::error::{Error, Result};
use crate::model::{stream_utility, DebtCost, ModelSpec, ParamVector, PaymentStream};

const LOWER: f64 = 1e-6;
const UPPER_LIMIT: f64 = 1e6;
const MAX_ITER: usize = 200;

/// Principal `x*` received at `t` that makes the debt contract
/// `[(t, x*), (big_t, -repayment)]` worth exactly zero.
pub fn indifference_principal(
    spec: &ModelSpec,
    theta: &ParamVector,
    repayment: f64,
    t: u32,
    big_t: u32,
) -> Result<f64> {
    if !(repayment > 0.0 && repayment.is_finite()) {
        return Err(Error::domain(format!("repayment must be positive, got {repayment}")));
    }
    if big_t <= t {
        return Err(Error::domain(format!(
            "repayment period {big_t} must follow loan period {t}"
        )));
    }
    let u = |x: f64| stream_utility(spec, theta, &PaymentStream::pair(t, x, big_t, -repayment)?);
    let mut lo = LOWER;
    if u(lo)? >= 0.0 {
        return Err(Error::NoBracket(format!(
            "the contract is acceptable even for a principal of {LOWER}"
        )));
    }
    let mut hi = repayment;
    while u(hi)? < 0.0 {
        if hi >= UPPER_LIMIT {
            return Err(Error::NoBracket(format!(
                "no principal up to {UPPER_LIMIT} compensates a repayment of {repayment}"
            )));
        }
        lo = hi;
        hi = (2.0 * hi).min(UPPER_LIMIT);
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = u(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (vl, vh) = (u(lo)?, u(hi)?);
    Ok(if vh.abs() <= vl.abs() { hi } else { lo })
}

/// Debt-neutral counterpart of `theta`: γ at its neutral value and, under
/// the duration specification, ζ = 1.
pub fn debt_neutral(spec: &ModelSpec, theta: &ParamVector) -> ParamVector {
    let mut neutral = *theta;
    neutral.gamma = spec.neutral_gamma();
    if spec.debt_cost == DebtCost::RepaymentScalingWithDuration {
        neutral.zeta = 1.0;
    }
    neutral
}

#[derive(Clone, Debug, PartialEq)]
pub struct PremiumReport {
    pub params: ParamVector,
    pub repayment: f64,
    pub t: u32,
    pub big_t: u32,
    pub indifference_principal: f64,
    pub neutral_principal: f64,
    pub premium: f64,
}

/// Relative increase of the principal over the neutral principal.
pub fn premium_from_principals(principal: f64, neutral_principal: f64) -> f64 {
    (principal - neutral_principal) / neutral_principal
}

pub fn borrowing_premium(
    spec: &ModelSpec,
    theta: &ParamVector,
    repayment: f64,
    t: u32,
    big_t: u32,
) -> Result<PremiumReport> {
    let x = indifference_principal(spec, theta, repayment, t, big_t)?;
    let neutral = debt_neutral(spec, theta);
    let x0 = if neutral == *theta {
        x
    } else {
        indifference_principal(spec, &neutral, repayment, t, big_t)?
    };
    Ok(PremiumReport {
        params: *theta,
        repayment,
        t,
        big_t,
        indifference_principal: x,
        neutral_principal: x0,
        premium: premium_from_principals(x, x0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Utility;

    fn reference_point() -> ParamVector {
        ParamVector::baseline(0.643, 0.0359, 1.0535, 1.1074, 1.0)
    }

    #[test]
    fn reported_loan_amounts() {
        let spec = ModelSpec::default();
        let r = borrowing_premium(&spec, &reference_point(), 15.0, 0, 1).unwrap();
        assert!(
            (r.indifference_principal - 20.93).abs() < 0.15,
            "{}",
            r.indifference_principal
        );
        assert!((r.neutral_principal - 18.08).abs() < 0.15, "{}", r.neutral_principal);
        assert!((r.premium - 0.1576).abs() < 0.01, "{}", r.premium);
    }

    #[test]
    fn root_residual_is_tiny() {
        let spec = ModelSpec::default();
        for (t, big_t) in [(0, 1), (1, 2), (0, 2)] {
            let x = indifference_principal(&spec, &reference_point(), 15.0, t, big_t).unwrap();
            let u = stream_utility(
                &spec,
                &reference_point(),
                &PaymentStream::pair(t, x, big_t, -15.0).unwrap(),
            )
            .unwrap();
            assert!(u.abs() <= 1e-10, "{u}");
        }
    }

    #[test]
    fn linear_patient_agent_borrows_at_par() {
        let spec = ModelSpec {
            utility: Utility::RiskNeutral,
            ..ModelSpec::default()
        };
        let th = ParamVector::baseline(0.0, 0.0, 1.0, 1.0, 1.0);
        let x = indifference_principal(&spec, &th, 15.0, 0, 1).unwrap();
        assert!((x - 15.0).abs() < 1e-9);
        assert_eq!(borrowing_premium(&spec, &th, 15.0, 0, 1).unwrap().premium, 0.0);
    }

    #[test]
    fn premium_sign_follows_gamma() {
        let spec = ModelSpec::default();
        let mut th = reference_point();
        th.gamma = 0.9;
        assert!(borrowing_premium(&spec, &th, 15.0, 0, 1).unwrap().premium < 0.0);
        th.gamma = 1.2;
        assert!(borrowing_premium(&spec, &th, 15.0, 0, 1).unwrap().premium > 0.0);
    }

    #[test]
    fn invalid_horizons_and_amounts() {
        let spec = ModelSpec::default();
        assert!(indifference_principal(&spec, &reference_point(), 15.0, 1, 1).is_err());
        assert!(indifference_principal(&spec, &reference_point(), -1.0, 0, 1).is_err());
        let mut th = reference_point();
        th.gamma = 1e9;
        assert!(matches!(
            indifference_principal(&spec, &th, 15.0, 0, 1),
            Err(Error::NoBracket(_))
        ));
    }
}

//! Valuation of dated payment streams and prospects.
//!
//! A payment stream holds at most two dated payments. Streams are valued by
//! discounting the reference-dependent value of each payment and, for debt
//! contracts (receive first, repay later), subtracting a debt cost. Prospects
//! are probability mixtures over streams and are valued by expectation.
//!
//! Periods are integer multiples of four weeks; period 0 is "today".

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default shift of the ε-CRRA utility.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Payment {
    pub period: u32,
    pub amount: f64,
}

impl Payment {
    pub fn new(period: u32, amount: f64) -> Self {
        Self { period, amount }
    }
}

/// One or two payments with strictly increasing periods.
#[derive(Clone, Debug, PartialEq)]
pub struct PaymentStream {
    payments: Vec<Payment>,
}

impl PaymentStream {
    pub fn new(payments: Vec<Payment>) -> Result<Self> {
        if payments.is_empty() {
            return Err(Error::InvalidStream("a stream needs at least one payment".into()));
        }
        if payments.len() > 2 {
            return Err(Error::InvalidStream(format!(
                "at most two payments are supported, got {}",
                payments.len()
            )));
        }
        if payments.len() == 2 && payments[0].period >= payments[1].period {
            return Err(Error::InvalidStream(format!(
                "periods must be strictly increasing ({} then {})",
                payments[0].period, payments[1].period
            )));
        }
        if let Some(p) = payments.iter().find(|p| !p.amount.is_finite()) {
            return Err(Error::InvalidStream(format!("non-finite amount {}", p.amount)));
        }
        Ok(Self { payments })
    }

    pub fn single(period: u32, amount: f64) -> Self {
        Self::new(vec![Payment::new(period, amount)]).expect("finite single payment")
    }

    pub fn pair(t: u32, x_t: f64, big_t: u32, x_big_t: f64) -> Result<Self> {
        Self::new(vec![Payment::new(t, x_t), Payment::new(big_t, x_big_t)])
    }

    /// The stream with a single zero payment today: "no further payments".
    pub fn zero() -> Self {
        Self::single(0, 0.0)
    }

    pub fn payments(&self) -> &[Payment] {
        &self.payments
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub probability: f64,
    pub stream: PaymentStream,
}

/// A lottery over payment streams.
#[derive(Clone, Debug, PartialEq)]
pub struct Prospect {
    branches: Vec<Branch>,
}

impl Prospect {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidProspect("no branches".into()));
        }
        for b in &branches {
            if !(0.0..=1.0).contains(&b.probability) {
                return Err(Error::InvalidProspect(format!(
                    "probability {} outside [0, 1]",
                    b.probability
                )));
            }
        }
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProspect(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { branches })
    }

    pub fn degenerate(stream: PaymentStream) -> Self {
        Self {
            branches: vec![Branch {
                probability: 1.0,
                stream,
            }],
        }
    }

    /// Equiprobable two-state lottery.
    pub fn coin_flip(heads: PaymentStream, tails: PaymentStream) -> Self {
        Self {
            branches: vec![
                Branch {
                    probability: 0.5,
                    stream: heads,
                },
                Branch {
                    probability: 0.5,
                    stream: tails,
                },
            ],
        }
    }

    pub fn zero() -> Self {
        Self::degenerate(PaymentStream::zero())
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn is_degenerate(&self) -> bool {
        self.branches.len() == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ContractKind {
    Saving,
    Debt,
    Other,
}

/// Sign of an individual payment; zero counts as a gain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Gain,
    Loss,
}

impl Sign {
    pub fn of(amount: f64) -> Self {
        if amount < 0.0 {
            Sign::Loss
        } else {
            Sign::Gain
        }
    }
}

/// Atemporal utility of money.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Utility {
    /// `((x+ε)^(1-α) - ε^(1-α)) / (1-α)`
    CrraEpsilon {
        epsilon: f64,
    },
    /// `x^(1-α) / (1-α)`
    CrraPlain,
    /// `(1 - e^(-φx)) / φ`
    Cara,
    RiskNeutral,
    /// ε-CRRA with separate curvature `alpha_loss` for losses.
    SignDependentCrra {
        epsilon: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Discount {
    Exponential,
    QuasiHyperbolic,
    /// Exponential with `delta` for gains and `delta_loss` for losses.
    SignDependentDelta,
    /// Quasi-hyperbolic with `beta` for gains and `beta_loss` for losses.
    SignDependentBeta,
}

/// Form of the utility cost of being in debt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DebtCost {
    /// `(1-γ) φ(T) v(x_T)`
    RepaymentScaling,
    /// `(1-γ ζ^(T-t-1)) φ(T) v(x_T)`
    RepaymentScalingWithDuration,
    /// `γ φ(t)`
    FixedCost,
    /// `(1-γ) φ(t) v(x_t)`
    LoanScaling,
    Neutral,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub utility: Utility,
    pub discount: Discount,
    pub debt_cost: DebtCost,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            utility: Utility::CrraEpsilon {
                epsilon: DEFAULT_EPSILON,
            },
            discount: Discount::Exponential,
            debt_cost: DebtCost::RepaymentScaling,
        }
    }
}

impl ModelSpec {
    /// Structural parameters used by this specification, in canonical order.
    pub fn active_params(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        match self.utility {
            Utility::CrraEpsilon { .. } | Utility::CrraPlain => ids.push(ParamId::Alpha),
            Utility::SignDependentCrra { .. } => {
                ids.push(ParamId::Alpha);
                ids.push(ParamId::AlphaLoss);
            }
            Utility::Cara => ids.push(ParamId::Phi),
            Utility::RiskNeutral => {}
        }
        match self.discount {
            Discount::Exponential => ids.push(ParamId::Delta),
            Discount::QuasiHyperbolic => ids.extend([ParamId::Beta, ParamId::Delta]),
            Discount::SignDependentDelta => ids.extend([ParamId::Delta, ParamId::DeltaLoss]),
            Discount::SignDependentBeta => ids.extend([ParamId::Beta, ParamId::BetaLoss, ParamId::Delta]),
        }
        match self.debt_cost {
            DebtCost::RepaymentScaling | DebtCost::FixedCost | DebtCost::LoanScaling => ids.push(ParamId::Gamma),
            DebtCost::RepaymentScalingWithDuration => ids.extend([ParamId::Gamma, ParamId::Zeta]),
            DebtCost::Neutral => {}
        }
        ids.push(ParamId::Lambda);
        ids.sort();
        ids
    }

    /// Value `gamma` takes when it plays no role (debt neutrality).
    pub fn neutral_gamma(&self) -> f64 {
        match self.debt_cost {
            DebtCost::FixedCost => 0.0,
            _ => 1.0,
        }
    }
}

/// Identifier of a model parameter. The derived ordering is the canonical
/// reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamId {
    Alpha,
    AlphaLoss,
    Phi,
    Beta,
    BetaLoss,
    Delta,
    DeltaLoss,
    Gamma,
    Zeta,
    Lambda,
    Mu,
    /// Fechner noise of MPL `k` (1..=7).
    MuMpl(u8),
    Kappa,
}

impl ParamId {
    pub const COUNT: usize = 19;

    pub fn all() -> Vec<ParamId> {
        let mut ids = vec![
            ParamId::Alpha,
            ParamId::AlphaLoss,
            ParamId::Phi,
            ParamId::Beta,
            ParamId::BetaLoss,
            ParamId::Delta,
            ParamId::DeltaLoss,
            ParamId::Gamma,
            ParamId::Zeta,
            ParamId::Lambda,
            ParamId::Mu,
        ];
        ids.extend((1..=7).map(ParamId::MuMpl));
        ids.push(ParamId::Kappa);
        ids
    }

    /// Dense index in `0..COUNT`.
    pub fn index(self) -> usize {
        match self {
            ParamId::Alpha => 0,
            ParamId::AlphaLoss => 1,
            ParamId::Phi => 2,
            ParamId::Beta => 3,
            ParamId::BetaLoss => 4,
            ParamId::Delta => 5,
            ParamId::DeltaLoss => 6,
            ParamId::Gamma => 7,
            ParamId::Zeta => 8,
            ParamId::Lambda => 9,
            ParamId::Mu => 10,
            ParamId::MuMpl(k) => 10 + k as usize,
            ParamId::Kappa => 18,
        }
    }

    pub fn name(self) -> String {
        match self {
            ParamId::Alpha => "alpha".into(),
            ParamId::AlphaLoss => "alpha_loss".into(),
            ParamId::Phi => "phi".into(),
            ParamId::Beta => "beta".into(),
            ParamId::BetaLoss => "beta_loss".into(),
            ParamId::Delta => "delta".into(),
            ParamId::DeltaLoss => "delta_loss".into(),
            ParamId::Gamma => "gamma".into(),
            ParamId::Zeta => "zeta".into(),
            ParamId::Lambda => "lambda".into(),
            ParamId::Mu => "mu".into(),
            ParamId::MuMpl(k) => format!("mu_{k}"),
            ParamId::Kappa => "kappa".into(),
        }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ParamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let id = match s {
            "alpha" | "alpha_gain" => ParamId::Alpha,
            "alpha_loss" => ParamId::AlphaLoss,
            "phi" => ParamId::Phi,
            "beta" | "beta_gain" => ParamId::Beta,
            "beta_loss" => ParamId::BetaLoss,
            "delta" | "delta_gain" => ParamId::Delta,
            "delta_loss" => ParamId::DeltaLoss,
            "gamma" => ParamId::Gamma,
            "zeta" => ParamId::Zeta,
            "lambda" => ParamId::Lambda,
            "mu" => ParamId::Mu,
            "kappa" => ParamId::Kappa,
            other => match other.strip_prefix("mu_").and_then(|k| k.parse::<u8>().ok()) {
                Some(k) if (1..=7).contains(&k) => ParamId::MuMpl(k),
                _ => return Err(Error::UnknownParameter(s.to_string())),
            },
        };
        Ok(id)
    }
}

/// Full parameter vector. Fields that a specification does not use keep
/// their neutral values. Under sign-dependent specifications `alpha`,
/// `delta` and `beta` are the gain-domain values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamVector<S = f64> {
    pub alpha: S,
    pub alpha_loss: S,
    /// Absolute risk aversion of the CARA form.
    pub phi: S,
    pub beta: S,
    pub beta_loss: S,
    pub delta: S,
    pub delta_loss: S,
    pub gamma: S,
    pub zeta: S,
    pub lambda: S,
    pub mu: S,
    pub mu_mpl: [S; 7],
    pub kappa: S,
}

impl Default for ParamVector<f64> {
    fn default() -> Self {
        Self::neutral()
    }
}

impl ParamVector<f64> {
    /// Neutral values: no curvature, no discounting, debt and loss neutrality,
    /// unit noise, no trembles.
    pub fn neutral() -> Self {
        Self {
            alpha: 0.0,
            alpha_loss: 0.0,
            phi: 0.0,
            beta: 0.0,
            beta_loss: 0.0,
            delta: 0.0,
            delta_loss: 0.0,
            gamma: 1.0,
            zeta: 1.0,
            lambda: 1.0,
            mu: 1.0,
            mu_mpl: [1.0; 7],
            kappa: 0.0,
        }
    }

    /// The five parameters of the baseline specification.
    pub fn baseline(alpha: f64, delta: f64, gamma: f64, lambda: f64, mu: f64) -> Self {
        Self {
            alpha,
            delta,
            gamma,
            lambda,
            mu,
            ..Self::neutral()
        }
    }

    /// Default starting values for estimation.
    pub fn initial(spec: &ModelSpec) -> Self {
        Self {
            alpha: 0.5,
            alpha_loss: 0.5,
            phi: 0.05,
            beta: 0.0,
            beta_loss: 0.0,
            delta: 0.05,
            delta_loss: 0.05,
            gamma: spec.neutral_gamma(),
            zeta: 1.0,
            lambda: 1.0,
            mu: 1.0,
            mu_mpl: [1.0; 7],
            kappa: 0.01,
        }
    }

    /// Checks the admissibility constraints of the parameters used by `ids`.
    pub fn check(&self, ids: &[ParamId]) -> Result<()> {
        for &id in ids {
            let v = self.get(id);
            if !v.is_finite() {
                return Err(Error::param(id.name(), format!("non-finite value {v}")));
            }
            match id {
                ParamId::Delta | ParamId::DeltaLoss | ParamId::Beta | ParamId::BetaLoss if v <= -1.0 => {
                    return Err(Error::param(id.name(), format!("1 + {v} must be positive")));
                }
                ParamId::Mu | ParamId::MuMpl(_) if v <= 0.0 => {
                    return Err(Error::param(id.name(), format!("{v} must be positive")));
                }
                ParamId::Lambda if v < 0.0 => {
                    return Err(Error::param(id.name(), format!("{v} must be non-negative")));
                }
                ParamId::Kappa if v.abs() > 1.0 => {
                    return Err(Error::param(id.name(), format!("|{v}| must not exceed 1")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl<S: Scalar> ParamVector<S> {
    /// Lifts a real vector into the scalar type `S` (no derivative seeds).
    pub fn lift(p: &ParamVector<f64>) -> Self {
        Self {
            alpha: S::cst(p.alpha),
            alpha_loss: S::cst(p.alpha_loss),
            phi: S::cst(p.phi),
            beta: S::cst(p.beta),
            beta_loss: S::cst(p.beta_loss),
            delta: S::cst(p.delta),
            delta_loss: S::cst(p.delta_loss),
            gamma: S::cst(p.gamma),
            zeta: S::cst(p.zeta),
            lambda: S::cst(p.lambda),
            mu: S::cst(p.mu),
            mu_mpl: p.mu_mpl.map(S::cst),
            kappa: S::cst(p.kappa),
        }
    }

    pub fn get(&self, id: ParamId) -> S {
        match id {
            ParamId::Alpha => self.alpha,
            ParamId::AlphaLoss => self.alpha_loss,
            ParamId::Phi => self.phi,
            ParamId::Beta => self.beta,
            ParamId::BetaLoss => self.beta_loss,
            ParamId::Delta => self.delta,
            ParamId::DeltaLoss => self.delta_loss,
            ParamId::Gamma => self.gamma,
            ParamId::Zeta => self.zeta,
            ParamId::Lambda => self.lambda,
            ParamId::Mu => self.mu,
            ParamId::MuMpl(k) => self.mu_mpl[(k - 1) as usize],
            ParamId::Kappa => self.kappa,
        }
    }

    pub fn set(&mut self, id: ParamId, value: S) {
        match id {
            ParamId::Alpha => self.alpha = value,
            ParamId::AlphaLoss => self.alpha_loss = value,
            ParamId::Phi => self.phi = value,
            ParamId::Beta => self.beta = value,
            ParamId::BetaLoss => self.beta_loss = value,
            ParamId::Delta => self.delta = value,
            ParamId::DeltaLoss => self.delta_loss = value,
            ParamId::Gamma => self.gamma = value,
            ParamId::Zeta => self.zeta = value,
            ParamId::Lambda => self.lambda = value,
            ParamId::Mu => self.mu = value,
            ParamId::MuMpl(k) => self.mu_mpl[(k - 1) as usize] = value,
            ParamId::Kappa => self.kappa = value,
        }
    }

    /// Real parts.
    pub fn values(&self) -> ParamVector<f64> {
        ParamVector {
            alpha: self.alpha.re(),
            alpha_loss: self.alpha_loss.re(),
            phi: self.phi.re(),
            beta: self.beta.re(),
            beta_loss: self.beta_loss.re(),
            delta: self.delta.re(),
            delta_loss: self.delta_loss.re(),
            gamma: self.gamma.re(),
            zeta: self.zeta.re(),
            lambda: self.lambda.re(),
            mu: self.mu.re(),
            mu_mpl: self.mu_mpl.map(|m| m.re()),
            kappa: self.kappa.re(),
        }
    }
}

// ---------------------------------------------------------------------------
// Generic kernels. These assume admissible inputs; the public functions below
// validate and then delegate.

/// Utility of a non-negative magnitude `m`. `sign` selects the curvature
/// parameter under sign-dependent utility.
pub(crate) fn magnitude_utility<S: Scalar>(utility: &Utility, theta: &ParamVector<S>, m: f64, sign: Sign) -> S {
    match *utility {
        Utility::CrraEpsilon { epsilon } => eps_crra(theta.alpha, m, epsilon),
        Utility::SignDependentCrra { epsilon } => {
            let alpha = match sign {
                Sign::Gain => theta.alpha,
                Sign::Loss => theta.alpha_loss,
            };
            eps_crra(alpha, m, epsilon)
        }
        Utility::CrraPlain => {
            if m == 0.0 {
                // Only reachable for alpha < 1 after validation.
                S::cst(0.0)
            } else if theta.alpha.re() == 1.0 {
                S::cst(m.ln())
            } else {
                let k = -theta.alpha + 1.0;
                (k * m.ln()).exp() / k
            }
        }
        Utility::Cara => (theta.phi * (-m)).exprel() * m,
        Utility::RiskNeutral => S::cst(m),
    }
}

/// `((m+ε)^k - ε^k)/k` with `k = 1-α`, written as `ε^k · L · exprel(k L)`
/// where `L = ln((m+ε)/ε)`. Continuous through `α = 1`, where it equals `L`.
#[inline]
fn eps_crra<S: Scalar>(alpha: S, m: f64, epsilon: f64) -> S {
    if m == 0.0 {
        return S::cst(0.0);
    }
    let k = -alpha + 1.0;
    let log_ratio = ((m + epsilon) / epsilon).ln();
    (k * epsilon.ln()).exp() * (k * log_ratio).exprel() * log_ratio
}

pub(crate) fn signed_value<S: Scalar>(utility: &Utility, theta: &ParamVector<S>, x: f64) -> S {
    if x >= 0.0 {
        magnitude_utility(utility, theta, x, Sign::Gain)
    } else {
        -(theta.lambda * magnitude_utility(utility, theta, -x, Sign::Loss))
    }
}

pub(crate) fn discount_factor<S: Scalar>(discount: &Discount, theta: &ParamVector<S>, tau: u32, sign: Sign) -> S {
    if tau == 0 {
        return S::cst(1.0);
    }
    let tau = tau as i32;
    let exponential = |delta: S| S::cst(1.0) / (delta + 1.0).powi(tau);
    match discount {
        Discount::Exponential => exponential(theta.delta),
        Discount::QuasiHyperbolic => exponential(theta.delta) / (theta.beta + 1.0),
        Discount::SignDependentDelta => match sign {
            Sign::Gain => exponential(theta.delta),
            Sign::Loss => exponential(theta.delta_loss),
        },
        Discount::SignDependentBeta => {
            let beta = match sign {
                Sign::Gain => theta.beta,
                Sign::Loss => theta.beta_loss,
            };
            exponential(theta.delta) / (beta + 1.0)
        }
    }
}

/// Debt cost of a stream already known to be a debt contract.
pub(crate) fn debt_cost_kernel<S: Scalar>(spec: &ModelSpec, theta: &ParamVector<S>, stream: &PaymentStream) -> S {
    debt_cost_with(spec, theta, stream, &|x| signed_value(&spec.utility, theta, x))
}

fn debt_cost_with<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVector<S>,
    stream: &PaymentStream,
    value: &impl Fn(f64) -> S,
) -> S {
    let [loan, repay] = [stream.payments[0], stream.payments[1]];
    let discounted_repayment =
        || discount_factor(&spec.discount, theta, repay.period, Sign::Loss) * value(repay.amount);
    match spec.debt_cost {
        DebtCost::RepaymentScaling => (-theta.gamma + 1.0) * discounted_repayment(),
        DebtCost::RepaymentScalingWithDuration => {
            let duration = (repay.period - loan.period - 1) as i32;
            (-(theta.gamma * theta.zeta.powi(duration)) + 1.0) * discounted_repayment()
        }
        DebtCost::FixedCost => theta.gamma * discount_factor(&spec.discount, theta, loan.period, Sign::Gain),
        DebtCost::LoanScaling => {
            (-theta.gamma + 1.0) * discount_factor(&spec.discount, theta, loan.period, Sign::Gain) * value(loan.amount)
        }
        DebtCost::Neutral => S::cst(0.0),
    }
}

pub(crate) fn stream_utility_kernel<S: Scalar>(spec: &ModelSpec, theta: &ParamVector<S>, stream: &PaymentStream) -> S {
    stream_utility_with(spec, theta, stream, &|x| signed_value(&spec.utility, theta, x))
}

/// Stream utility with the value function supplied by the caller, which
/// lets repeated evaluations share a table of values.
pub(crate) fn stream_utility_with<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVector<S>,
    stream: &PaymentStream,
    value: &impl Fn(f64) -> S,
) -> S {
    let mut total = S::cst(0.0);
    for p in &stream.payments {
        // A zero payment is the reference point and carries no value.
        if p.amount == 0.0 {
            continue;
        }
        let sign = Sign::of(p.amount);
        total += discount_factor(&spec.discount, theta, p.period, sign) * value(p.amount);
    }
    if classify(stream) == ContractKind::Debt {
        total = total - debt_cost_with(spec, theta, stream, value);
    }
    total
}

pub(crate) fn prospect_utility_with<S: Scalar>(
    spec: &ModelSpec,
    theta: &ParamVector<S>,
    prospect: &Prospect,
    value: &impl Fn(f64) -> S,
) -> S {
    let mut total = S::cst(0.0);
    for b in &prospect.branches {
        total += stream_utility_with(spec, theta, &b.stream, value) * b.probability;
    }
    total
}

pub(crate) fn prospect_utility_kernel<S: Scalar>(spec: &ModelSpec, theta: &ParamVector<S>, prospect: &Prospect) -> S {
    let mut total = S::cst(0.0);
    for b in &prospect.branches {
        total += stream_utility_kernel(spec, theta, &b.stream) * b.probability;
    }
    total
}

/// Domain checks shared by the public entry points.
pub(crate) fn check_spec_params(spec: &ModelSpec, theta: &ParamVector<f64>) -> Result<()> {
    theta.check(&spec.active_params())?;
    if let Utility::CrraEpsilon { epsilon } | Utility::SignDependentCrra { epsilon } = spec.utility {
        if !(epsilon > 0.0) {
            return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
        }
    }
    Ok(())
}

fn check_magnitude(utility: &Utility, theta: &ParamVector<f64>, m: f64) -> Result<()> {
    if !(m >= 0.0) {
        return Err(Error::domain(format!("utility requires x >= 0, got {m}")));
    }
    if let Utility::CrraPlain = utility {
        let alpha = theta.alpha;
        if m == 0.0 && alpha >= 1.0 {
            return Err(Error::domain(format!(
                "x^(1-alpha)/(1-alpha) is unbounded at x = 0 for alpha = {alpha}"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Public operations.

/// Utility `u(x)` of a gain `x >= 0`.
pub fn atemporal_utility(spec: &ModelSpec, theta: &ParamVector, x: f64) -> Result<f64> {
    check_magnitude(&spec.utility, theta, x)?;
    Ok(magnitude_utility(&spec.utility, theta, x, Sign::Gain))
}

/// Reference-dependent value: `u(x)` for gains, `-λ u(-x)` for losses.
pub fn value(spec: &ModelSpec, theta: &ParamVector, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("non-finite amount {x}")));
    }
    check_magnitude(&spec.utility, theta, x.abs())?;
    Ok(signed_value(&spec.utility, theta, x))
}

/// Discount factor of a payment `tau` periods ahead.
pub fn discount(spec: &ModelSpec, theta: &ParamVector, tau: u32, sign: Sign) -> Result<f64> {
    let (delta, beta) = match (spec.discount, sign) {
        (Discount::SignDependentDelta, Sign::Loss) => (theta.delta_loss, 0.0),
        (Discount::SignDependentDelta, Sign::Gain) | (Discount::Exponential, _) => (theta.delta, 0.0),
        (Discount::QuasiHyperbolic, _) | (Discount::SignDependentBeta, Sign::Gain) => (theta.delta, theta.beta),
        (Discount::SignDependentBeta, Sign::Loss) => (theta.delta, theta.beta_loss),
    };
    if !(1.0 + delta > 0.0) {
        return Err(Error::domain(format!(
            "1 + delta must be positive, got delta = {delta}"
        )));
    }
    if !(1.0 + beta > 0.0) {
        return Err(Error::domain(format!("1 + beta must be positive, got beta = {beta}")));
    }
    Ok(discount_factor(&spec.discount, theta, tau, sign))
}

/// Saving iff pay-then-receive, debt iff receive-then-repay.
pub fn classify(stream: &PaymentStream) -> ContractKind {
    match stream.payments.as_slice() {
        [first, second] if first.amount > 0.0 && second.amount < 0.0 => ContractKind::Debt,
        [first, second] if first.amount < 0.0 && second.amount > 0.0 => ContractKind::Saving,
        _ => ContractKind::Other,
    }
}

/// Utility cost of being in debt. Only defined for debt contracts.
pub fn debt_cost(spec: &ModelSpec, theta: &ParamVector, stream: &PaymentStream) -> Result<f64> {
    if classify(stream) != ContractKind::Debt {
        return Err(Error::Contract("debt cost is only defined for debt contracts".into()));
    }
    check_spec_params(spec, theta)?;
    check_stream(spec, theta, stream)?;
    Ok(debt_cost_kernel(spec, theta, stream))
}

fn check_stream(spec: &ModelSpec, theta: &ParamVector, stream: &PaymentStream) -> Result<()> {
    for p in &stream.payments {
        if p.amount != 0.0 {
            check_magnitude(&spec.utility, theta, p.amount.abs())?;
        }
    }
    Ok(())
}

/// Discounted value of a stream net of the debt cost.
pub fn stream_utility(spec: &ModelSpec, theta: &ParamVector, stream: &PaymentStream) -> Result<f64> {
    check_spec_params(spec, theta)?;
    check_stream(spec, theta, stream)?;
    Ok(stream_utility_kernel(spec, theta, stream))
}

/// Expected utility of a prospect.
pub fn prospect_utility(spec: &ModelSpec, theta: &ParamVector, prospect: &Prospect) -> Result<f64> {
    check_spec_params(spec, theta)?;
    for b in &prospect.branches {
        check_stream(spec, theta, &b.stream)?;
    }
    Ok(prospect_utility_kernel(spec, theta, prospect))
}

#[cfg(test)]
mod tests {
    use super::*;

    // u(15) and friends at alpha = 0.643, eps = 1e-4, evaluated with
    // 60-digit arithmetic.
    const U15: f64 = 7.260_866_103_856_818_7;
    const LOSS15: f64 = -8.040_683_123_411_041;
    const MPL3_A: f64 = 7.339_553_984_041_702;

    fn eps_spec() -> ModelSpec {
        ModelSpec::default()
    }

    fn theta() -> ParamVector {
        ParamVector::baseline(0.643, 0.036, 1.0535, 1.1074, 1.0)
    }

    fn linear() -> ModelSpec {
        ModelSpec {
            utility: Utility::RiskNeutral,
            ..ModelSpec::default()
        }
    }

    #[test]
    fn eps_crra_reference_values() {
        let s = eps_spec();
        assert_eq!(atemporal_utility(&s, &theta(), 0.0).unwrap(), 0.0);
        let u = atemporal_utility(&s, &theta(), 15.0).unwrap();
        assert!((u - U15).abs() < 1e-12, "{u}");
        assert_eq!(atemporal_utility(&linear(), &theta(), 15.0).unwrap(), 15.0);
    }

    #[test]
    fn log_limit_at_unit_curvature() {
        let s = eps_spec();
        let mut th = theta();
        th.alpha = 1.0;
        let u = atemporal_utility(&s, &th, 15.0).unwrap();
        assert!((u - ((15.0f64 + 1e-4).ln() - 1e-4f64.ln())).abs() < 1e-12);
        // continuity through alpha = 1
        th.alpha = 1.0 + 1e-9;
        let near = atemporal_utility(&s, &th, 15.0).unwrap();
        assert!((near - u).abs() < 1e-6);

        let plain = ModelSpec {
            utility: Utility::CrraPlain,
            ..s
        };
        th.alpha = 1.0;
        assert!((atemporal_utility(&plain, &th, 15.0).unwrap() - 15f64.ln()).abs() < 1e-15);
        assert!(matches!(atemporal_utility(&plain, &th, 0.0), Err(Error::Domain(_))));
        th.alpha = 0.5;
        assert_eq!(atemporal_utility(&plain, &th, 0.0).unwrap(), 0.0);
        assert!((atemporal_utility(&plain, &th, 4.0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cara_forms() {
        let s = ModelSpec {
            utility: Utility::Cara,
            ..ModelSpec::default()
        };
        let mut th = theta();
        th.phi = 0.1;
        let u = atemporal_utility(&s, &th, 10.0).unwrap();
        assert!((u - (1.0 - (-1.0f64).exp()) / 0.1).abs() < 1e-12);
        th.phi = 0.0;
        assert!((atemporal_utility(&s, &th, 10.0).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn negative_magnitude_is_rejected() {
        assert!(matches!(
            atemporal_utility(&eps_spec(), &theta(), -1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn value_reflects_losses() {
        let v = value(&eps_spec(), &theta(), -15.0).unwrap();
        assert!((v - LOSS15).abs() < 1e-12);
        let mut th = theta();
        th.lambda = 2.0;
        assert_eq!(value(&linear(), &th, -1.0).unwrap(), -2.0);
        assert_eq!(value(&eps_spec(), &th, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn sign_dependent_curvature_uses_loss_alpha() {
        let s = ModelSpec {
            utility: Utility::SignDependentCrra {
                epsilon: DEFAULT_EPSILON,
            },
            ..ModelSpec::default()
        };
        let mut th = theta();
        th.alpha = 0.2;
        th.alpha_loss = 0.643;
        let v = value(&s, &th, -15.0).unwrap();
        assert!((v - LOSS15).abs() < 1e-12);
        let g = value(&s, &th, 15.0).unwrap();
        assert!(g > U15);
    }

    #[test]
    fn discount_forms() {
        let th = theta();
        for d in [
            Discount::Exponential,
            Discount::QuasiHyperbolic,
            Discount::SignDependentDelta,
            Discount::SignDependentBeta,
        ] {
            let s = ModelSpec {
                discount: d,
                ..ModelSpec::default()
            };
            assert_eq!(discount(&s, &th, 0, Sign::Gain).unwrap(), 1.0);
            assert_eq!(discount(&s, &th, 0, Sign::Loss).unwrap(), 1.0);
        }
        let f = discount(&eps_spec(), &th, 1, Sign::Gain).unwrap();
        assert!((f - 0.965_250_965_250_965_2).abs() < 1e-15);

        let qh = ModelSpec {
            discount: Discount::QuasiHyperbolic,
            ..ModelSpec::default()
        };
        assert_eq!(
            discount(&qh, &th, 2, Sign::Gain).unwrap(),
            discount(&eps_spec(), &th, 2, Sign::Gain).unwrap()
        );
        let mut present = th;
        present.beta = 0.25;
        let f = discount(&qh, &present, 1, Sign::Gain).unwrap();
        assert!((f - 1.0 / (1.25 * 1.036)).abs() < 1e-15);

        let mut bad = th;
        bad.delta = -1.0;
        assert!(discount(&eps_spec(), &bad, 1, Sign::Gain).is_err());
        bad = th;
        bad.beta = -1.5;
        assert!(discount(&qh, &bad, 1, Sign::Gain).is_err());
    }

    #[test]
    fn sign_dependent_discounting_follows_payment_sign() {
        let s = ModelSpec {
            discount: Discount::SignDependentDelta,
            ..ModelSpec::default()
        };
        let mut th = theta();
        th.delta = 0.1;
        th.delta_loss = 0.0;
        assert!((discount(&s, &th, 1, Sign::Gain).unwrap() - 1.0 / 1.1).abs() < 1e-15);
        assert_eq!(discount(&s, &th, 1, Sign::Loss).unwrap(), 1.0);

        let s = ModelSpec {
            discount: Discount::SignDependentBeta,
            ..ModelSpec::default()
        };
        th.beta = 0.0;
        th.beta_loss = 1.0;
        assert!((discount(&s, &th, 1, Sign::Loss).unwrap() - 0.5 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn classification() {
        let debt = PaymentStream::pair(0, 15.0, 1, -15.0).unwrap();
        let saving = PaymentStream::pair(0, -15.0, 1, 30.0).unwrap();
        assert_eq!(classify(&debt), ContractKind::Debt);
        assert_eq!(classify(&saving), ContractKind::Saving);
        assert_eq!(classify(&PaymentStream::single(0, 18.2)), ContractKind::Other);
        assert_eq!(
            classify(&PaymentStream::pair(0, 5.0, 1, 5.0).unwrap()),
            ContractKind::Other
        );
    }

    #[test]
    fn stream_validation() {
        assert!(PaymentStream::new(vec![]).is_err());
        assert!(PaymentStream::pair(1, 1.0, 1, 2.0).is_err());
        assert!(PaymentStream::new(vec![Payment::new(0, 1.0); 3]).is_err());
        let s = PaymentStream::single(0, 1.0);
        let half = Branch {
            probability: 0.5,
            stream: s.clone(),
        };
        assert!(Prospect::new(vec![half.clone()]).is_err());
        assert!(Prospect::new(vec![half.clone(), half]).is_ok());
    }

    #[test]
    fn debt_cost_forms() {
        let debt = PaymentStream::pair(0, 20.0, 1, -15.0).unwrap();
        let mut th = theta();
        th.gamma = 1.0;
        assert_eq!(debt_cost(&eps_spec(), &th, &debt).unwrap(), 0.0);

        th.gamma = 1.3;
        let dur = ModelSpec {
            debt_cost: DebtCost::RepaymentScalingWithDuration,
            ..ModelSpec::default()
        };
        th.zeta = 1.7;
        assert_eq!(
            debt_cost(&dur, &th, &debt).unwrap(),
            debt_cost(&eps_spec(), &th, &debt).unwrap()
        );

        let fixed = ModelSpec {
            debt_cost: DebtCost::FixedCost,
            ..ModelSpec::default()
        };
        th.gamma = 0.5;
        assert_eq!(debt_cost(&fixed, &th, &debt).unwrap(), 0.5);

        let saving = PaymentStream::pair(0, -15.0, 1, 30.0).unwrap();
        assert!(matches!(debt_cost(&eps_spec(), &th, &saving), Err(Error::Contract(_))));
    }

    #[test]
    fn loan_scaling_cost() {
        let s = ModelSpec {
            debt_cost: DebtCost::LoanScaling,
            ..ModelSpec::default()
        };
        let mut th = theta();
        th.gamma = 0.9;
        let debt = PaymentStream::pair(1, 15.0, 2, -15.0).unwrap();
        let c = debt_cost(&s, &th, &debt).unwrap();
        let expect = 0.1 * U15 / 1.036;
        assert!((c - expect).abs() < 1e-12);
    }

    #[test]
    fn reported_indifference_loans_are_near_zero_utility() {
        let th = ParamVector::baseline(0.643, 0.0359, 1.0535, 1.1074, 1.0);
        let u_at = |principal: f64, th: &ParamVector| {
            let s = PaymentStream::pair(0, principal, 1, -15.0).unwrap();
            stream_utility(&eps_spec(), th, &s).unwrap()
        };
        // utility is increasing in the principal; indifference lies within
        // 0.15 of the reported loan
        assert!(u_at(20.93 - 0.15, &th) < 0.0 && u_at(20.93 + 0.15, &th) > 0.0);
        let mut neutral = th;
        neutral.gamma = 1.0;
        assert!(u_at(18.08 - 0.15, &neutral) < 0.0 && u_at(18.08 + 0.15, &neutral) > 0.0);
    }

    #[test]
    fn prospect_expectations() {
        let lottery = Prospect::coin_flip(PaymentStream::single(0, 30.0), PaymentStream::single(0, 1.0));
        assert_eq!(prospect_utility(&linear(), &theta(), &lottery).unwrap(), 15.5);
        assert_eq!(
            stream_utility(&linear(), &theta(), &PaymentStream::single(0, 10.0)).unwrap(),
            10.0
        );
        let a = Prospect::coin_flip(PaymentStream::single(0, 14.0), PaymentStream::single(0, 17.0));
        let u = prospect_utility(&eps_spec(), &theta(), &a).unwrap();
        assert!((u - MPL3_A).abs() < 1e-12);
        let debt = PaymentStream::pair(0, 20.0, 1, -15.0).unwrap();
        assert_eq!(
            prospect_utility(&eps_spec(), &theta(), &Prospect::degenerate(debt.clone())).unwrap(),
            stream_utility(&eps_spec(), &theta(), &debt).unwrap()
        );
    }

    #[test]
    fn param_names_round_trip() {
        for id in ParamId::all() {
            assert_eq!(id.name().parse::<ParamId>().unwrap(), id);
        }
        assert_eq!(ParamId::all().len(), ParamId::COUNT);
        for (i, id) in ParamId::all().into_iter().enumerate() {
            assert_eq!(id.index(), i);
        }
        assert!("mu_8".parse::<ParamId>().is_err());
    }

    #[test]
    fn active_parameter_masks() {
        assert_eq!(
            ModelSpec::default().active_params(),
            vec![ParamId::Alpha, ParamId::Delta, ParamId::Gamma, ParamId::Lambda]
        );
        let s = ModelSpec {
            utility: Utility::RiskNeutral,
            discount: Discount::SignDependentBeta,
            debt_cost: DebtCost::Neutral,
        };
        assert_eq!(
            s.active_params(),
            vec![ParamId::Beta, ParamId::BetaLoss, ParamId::Delta, ParamId::Lambda]
        );
    }
}

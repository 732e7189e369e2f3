//! Run configuration: a TOML file merged with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use debtaversion::choice::{ErrorSpec, Link};
use debtaversion::mixed::{DistributionParams, DrawPlan, DrawScheme};
use debtaversion::model::{DebtCost, Discount, ModelSpec, ParamId, ParamVector, Utility, DEFAULT_EPSILON};
use debtaversion::optimize::{Method, Options};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    #[default]
    CrraEps,
    Crra,
    Cara,
    Linear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DebtCostKind {
    #[default]
    Scale,
    Fixed,
    Loan,
    Neutral,
    Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SignDependent {
    Alpha,
    Delta,
    Beta,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    #[default]
    Logit,
    Probit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    #[default]
    Bfgs,
    Newton,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    #[default]
    Halton,
    Pseudo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub utility: UtilityKind,
    pub epsilon: f64,
    pub debt_cost: DebtCostKind,
    pub present_bias: bool,
    pub sign_dependent: Vec<SignDependent>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            utility: UtilityKind::default(),
            epsilon: DEFAULT_EPSILON,
            debt_cost: DebtCostKind::default(),
            present_bias: false,
            sign_dependent: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorSection {
    pub link: LinkKind,
    pub tremble: bool,
    pub per_mpl_mu: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub name: String,
    pub fixed: BTreeMap<String, f64>,
    pub init: BTreeMap<String, f64>,
    /// Parameters that vary linearly with the dataset covariates.
    pub covariates: Vec<String>,
    pub method: MethodKind,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub starts: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        let opts = Options::default();
        Self {
            data: None,
            output: None,
            name: "model".into(),
            fixed: BTreeMap::new(),
            init: BTreeMap::new(),
            covariates: Vec::new(),
            method: MethodKind::default(),
            max_iter: opts.max_iter,
            grad_tol: opts.grad_tol,
            starts: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixedSection {
    pub draws: usize,
    pub scheme: SchemeKind,
}

impl Default for MixedSection {
    fn default() -> Self {
        Self {
            draws: DrawPlan::default().n_draws,
            scheme: SchemeKind::default(),
        }
    }
}

/// Joint normal law of (alpha, delta, gamma, lambda, mu).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    pub mean: [f64; 5],
    pub sd: [f64; 5],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr: Option<[[f64; 5]; 5]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub output: Option<PathBuf>,
    pub subjects: usize,
    pub mpls: Vec<u8>,
    pub theta: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSection>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            output: None,
            subjects: 200,
            mpls: vec![1, 2, 3, 4, 5, 6, 7],
            theta: BTreeMap::new(),
            distribution: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PremiumSection {
    pub output: Option<PathBuf>,
    pub theta: BTreeMap<String, f64>,
    pub repayment: f64,
    /// `[t, T]` pairs: principal received at `t`, repaid at `T`.
    pub horizons: Vec<[u32; 2]>,
}

impl Default for PremiumSection {
    fn default() -> Self {
        Self {
            output: None,
            theta: BTreeMap::new(),
            repayment: 15.0,
            horizons: vec![[0, 1]],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub model: ModelSection,
    pub error: ErrorSection,
    pub fit: FitSection,
    pub mixed: MixedSection,
    pub simulate: SimulateSection,
    pub premium: PremiumSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let signs = |s| m.sign_dependent.contains(&s);
        if !(m.epsilon > 0.0 && m.epsilon.is_finite()) {
            bail!("model.epsilon must be positive, got {}", m.epsilon);
        }
        let utility = match (m.utility, signs(SignDependent::Alpha)) {
            (UtilityKind::CrraEps, true) => Utility::SignDependentCrra { epsilon: m.epsilon },
            (_, true) => bail!("sign-dependent alpha needs the crra-eps utility"),
            (UtilityKind::CrraEps, false) => Utility::CrraEpsilon { epsilon: m.epsilon },
            (UtilityKind::Crra, false) => Utility::CrraPlain,
            (UtilityKind::Cara, false) => Utility::Cara,
            (UtilityKind::Linear, false) => Utility::RiskNeutral,
        };
        let discount = match (signs(SignDependent::Delta), signs(SignDependent::Beta), m.present_bias) {
            (true, true, _) => bail!("sign-dependent delta and beta cannot be combined"),
            (true, false, true) => {
                bail!("sign-dependent delta is an exponential-discounting variant; drop present bias")
            }
            (true, false, false) => Discount::SignDependentDelta,
            (false, true, _) => Discount::SignDependentBeta,
            (false, false, true) => Discount::QuasiHyperbolic,
            (false, false, false) => Discount::Exponential,
        };
        let debt_cost = match m.debt_cost {
            DebtCostKind::Scale => DebtCost::RepaymentScaling,
            DebtCostKind::Fixed => DebtCost::FixedCost,
            DebtCostKind::Loan => DebtCost::LoanScaling,
            DebtCostKind::Neutral => DebtCost::Neutral,
            DebtCostKind::Duration => DebtCost::RepaymentScalingWithDuration,
        };
        Ok(ModelSpec {
            utility,
            discount,
            debt_cost,
        })
    }

    pub fn error_spec(&self) -> ErrorSpec {
        ErrorSpec {
            link: match self.error.link {
                LinkKind::Logit => Link::Logit,
                LinkKind::Probit => Link::Probit,
            },
            tremble: self.error.tremble,
            per_mpl_mu: self.error.per_mpl_mu,
        }
    }

    pub fn optimizer(&self) -> Result<Options> {
        if !(self.fit.grad_tol > 0.0) {
            bail!("fit.grad_tol must be positive");
        }
        Ok(Options {
            method: match self.fit.method {
                MethodKind::Bfgs => Method::Bfgs,
                MethodKind::Newton => Method::Newton,
            },
            max_iter: self.fit.max_iter,
            grad_tol: self.fit.grad_tol,
        })
    }

    pub fn draw_plan(&self) -> DrawPlan {
        DrawPlan {
            n_draws: self.mixed.draws,
            scheme: match self.mixed.scheme {
                SchemeKind::Halton => DrawScheme::ShuffledHalton,
                SchemeKind::Pseudo => DrawScheme::PseudoRandom,
            },
            seed: self.seed,
        }
    }
}

pub fn param_map(map: &BTreeMap<String, f64>) -> Result<Vec<(ParamId, f64)>> {
    map.iter().map(|(k, v)| Ok((k.parse::<ParamId>()?, *v))).collect()
}

/// Starting values of `spec` with the entries of `map` applied.
pub fn theta_from(spec: &ModelSpec, map: &BTreeMap<String, f64>) -> Result<ParamVector> {
    let mut theta = ParamVector::initial(spec);
    for (id, v) in param_map(map)? {
        theta.set(id, v);
    }
    Ok(theta)
}

pub fn distribution(section: &DistributionSection) -> Result<DistributionParams> {
    let law = match section.corr {
        Some(corr) => DistributionParams::from_sds_corr(section.mean, section.sd, corr)?,
        None => DistributionParams::diagonal(section.mean, section.sd)?,
    };
    Ok(law)
}

/// Parses `name=value`.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

/// Parses `t,T`.
pub fn parse_horizon(s: &str) -> std::result::Result<[u32; 2], String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected t,T, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<u32>().map_err(|_| format!("`{x}` is not a period"));
    Ok([p(a)?, p(b)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("seed = 1\nbogus = 2").is_err());
        assert!(toml::from_str::<RunConfig>("[fit]\nfixd = { gamma = 1.0 }").is_err());
        assert!(toml::from_str::<RunConfig>("[model]\nutility = \"quadratic\"").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg: RunConfig = toml::from_str(
            "seed = 7\n[model]\ndebt_cost = \"duration\"\nsign_dependent = [\"beta\"]\n[fit]\nfixed = { gamma = 1.0 }\n\
             [simulate]\ndistribution = { mean = [0.5, 0.04, 1.06, 1.1, 1.0], sd = [0.1, 0.01, 0.05, 0.1, 0.2] }",
        )
        .unwrap();
        cfg.threads = Some(2);
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let spec = back.model_spec().unwrap();
        assert_eq!(spec.discount, Discount::SignDependentBeta);
        assert_eq!(spec.debt_cost, DebtCost::RepaymentScalingWithDuration);
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("../../../docs/formats.md");
        let start = doc.find("```toml\n").unwrap() + 8;
        let len = doc[start..].find("```").unwrap();
        let cfg: RunConfig = toml::from_str(&doc[start..start + len]).unwrap();
        assert_eq!(cfg.premium.horizons, vec![[0, 1], [1, 2]]);
        cfg.model_spec().unwrap();
    }

    #[test]
    fn conflicting_variants() {
        let mut cfg = RunConfig::default();
        cfg.model.sign_dependent = vec![SignDependent::Delta, SignDependent::Beta];
        assert!(cfg.model_spec().is_err());
        cfg.model.sign_dependent = vec![SignDependent::Alpha];
        cfg.model.utility = UtilityKind::Cara;
        assert!(cfg.model_spec().is_err());
        cfg.model.utility = UtilityKind::CrraEps;
        assert!(matches!(
            cfg.model_spec().unwrap().utility,
            Utility::SignDependentCrra { .. }
        ));
    }

    #[test]
    fn assignments_and_horizons() {
        assert_eq!(parse_assignment("gamma=1").unwrap(), ("gamma".into(), 1.0));
        assert!(parse_assignment("gamma").is_err());
        assert_eq!(parse_horizon("0,2").unwrap(), [0, 2]);
        assert!(parse_horizon("0;2").is_err());
    }
}

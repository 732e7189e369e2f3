//! Synthetic choices drawn from the model's own choice probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::catalog::{load_catalog, MplCatalog};
use crate::choice::{choice_prob, ErrorSpec};
use crate::dataset::{Dataset, DatasetBuilder};
use crate::error::{Error, Result};
use crate::mixed::{DistributionParams, MIXED_PARAMS};
use crate::model::{check_spec_params, prospect_utility, ModelSpec, ParamVector};

/// Where subject parameters come from.
#[derive(Clone, Debug)]
pub enum Population {
    /// Every subject shares one parameter vector.
    Fixed(ParamVector),
    /// Subjects draw (α, δ, γ, λ, μ) from a joint normal; the remaining
    /// parameters come from `base`.
    Distribution { base: ParamVector, law: DistributionParams },
}

/// Generator of subject `index` under `seed`.
pub fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn subject_label(index: usize) -> String {
    format!("s{:04}", index + 1)
}

/// Simulates `n_subjects` subjects answering every catalog row of `mpl_ids`.
pub fn simulate(
    spec: &ModelSpec,
    error: &ErrorSpec,
    population: &Population,
    n_subjects: usize,
    mpl_ids: &[u8],
    seed: u64,
) -> Result<Dataset> {
    simulate_with(&load_catalog(), spec, error, population, n_subjects, mpl_ids, seed)
}

pub fn simulate_with(
    catalog: &MplCatalog,
    spec: &ModelSpec,
    error: &ErrorSpec,
    population: &Population,
    n_subjects: usize,
    mpl_ids: &[u8],
    seed: u64,
) -> Result<Dataset> {
    let thetas = (0..n_subjects)
        .map(|i| match population {
            Population::Fixed(theta) => *theta,
            Population::Distribution { base, law } => {
                // the parameter draw uses its own stream block so that the
                // choice draws of subject i do not depend on the population kind
                let mut rng = subject_rng(seed ^ 0x9e37_79b9_7f4a_7c15, i);
                let z: [f64; MIXED_PARAMS.len()] = std::array::from_fn(|_| rng.sample(StandardNormal));
                law.theta_at(base, &z)
            }
        })
        .collect::<Vec<_>>();
    simulate_subjects_with(catalog, spec, error, &thetas, mpl_ids, seed)
}

/// Simulates one subject per entry of `thetas`.
pub fn simulate_subjects(
    spec: &ModelSpec,
    error: &ErrorSpec,
    thetas: &[ParamVector],
    mpl_ids: &[u8],
    seed: u64,
) -> Result<Dataset> {
    simulate_subjects_with(&load_catalog(), spec, error, thetas, mpl_ids, seed)
}

pub fn simulate_subjects_with(
    catalog: &MplCatalog,
    spec: &ModelSpec,
    error: &ErrorSpec,
    thetas: &[ParamVector],
    mpl_ids: &[u8],
    seed: u64,
) -> Result<Dataset> {
    if let Some(&id) = mpl_ids.iter().find(|&&id| catalog.rows(id).is_empty()) {
        return Err(Error::Dataset(format!("MPL {id} is not in the catalog")));
    }
    let answers = thetas
        .par_iter()
        .enumerate()
        .map(|(i, theta)| -> Result<Vec<bool>> {
            check_spec_params(spec, theta)?;
            let mut rng = subject_rng(seed, i);
            let mut out = Vec::new();
            for &mpl in mpl_ids {
                for design in catalog.rows(mpl) {
                    let du = prospect_utility(spec, theta, &design.option_b)?
                        - prospect_utility(spec, theta, &design.option_a)?;
                    let p = choice_prob(error, du, theta, mpl)?;
                    out.push(rng.gen::<f64>() < p);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut b = DatasetBuilder::default();
    for (i, answers) in answers.iter().enumerate() {
        let mut k = 0;
        for &mpl in mpl_ids {
            for (r, design) in catalog.rows(mpl).iter().enumerate() {
                b.push(&subject_label(i), mpl, r as u32 + 1, design.clone(), answers[k])?;
                k += 1;
            }
        }
    }
    Ok(b.build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::catalog::{CONTRACT_LEG, MAIN_MPLS};
    use crate::model::{DebtCost, Utility};

    fn theta() -> ParamVector {
        ParamVector::baseline(0.6, 0.04, 1.05, 1.1, 1.0)
    }

    #[test]
    fn reproducible_and_seed_dependent() {
        let spec = ModelSpec::default();
        let e = ErrorSpec::default();
        let pop = Population::Fixed(theta());
        let a = simulate(&spec, &e, &pop, 20, &MAIN_MPLS, 7).unwrap();
        let b = simulate(&spec, &e, &pop, 20, &MAIN_MPLS, 7).unwrap();
        let c = simulate(&spec, &e, &pop, 20, &MAIN_MPLS, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.n_records(), 20 * 90);
        assert_eq!(a.subject_ids()[0], "s0001");
    }

    #[test]
    fn nearly_deterministic_patient_linear_agent() {
        let spec = ModelSpec {
            utility: Utility::RiskNeutral,
            debt_cost: DebtCost::Neutral,
            ..ModelSpec::default()
        };
        let mut th = ParamVector::baseline(0.0, 0.0, 1.0, 1.0, 1e-9);
        th.delta = 0.02;
        let d = simulate(&spec, &ErrorSpec::default(), &Population::Fixed(th), 3, &[6], 1).unwrap();
        let catalog = load_catalog();
        for rec in d.records() {
            let principal = catalog.row(6, rec.row).unwrap().option_b.branches()[0]
                .stream
                .payments()[0]
                .amount;
            assert_eq!(rec.chosen_b, principal > CONTRACT_LEG / 1.02, "row {}", rec.row);
        }
    }

    #[test]
    fn full_tremble_is_a_fair_coin() {
        let e = ErrorSpec {
            tremble: true,
            ..Default::default()
        };
        let mut th = theta();
        th.kappa = 1.0;
        let d = simulate(
            &ModelSpec::default(),
            &e,
            &Population::Fixed(th),
            1000,
            &[4, 5, 6, 7, 8, 9],
            3,
        )
        .unwrap();
        assert!(d.n_records() >= 90_000);
        let rate = d.records().iter().filter(|r| r.chosen_b).count() as f64 / d.n_records() as f64;
        assert!((rate - 0.5).abs() < 0.01, "{rate}");
    }

    #[test]
    fn acceptance_falls_as_mpl4_payoff_shrinks() {
        let d = simulate(
            &ModelSpec::default(),
            &ErrorSpec::default(),
            &Population::Fixed(theta()),
            10_000,
            &[4],
            11,
        )
        .unwrap();
        let mut rates = [0.0; 15];
        for r in d.records() {
            rates[r.row as usize - 1] += r.chosen_b as u8 as f64 / 10_000.0;
        }
        for w in rates.windows(2) {
            assert!(w[0] >= w[1], "{rates:?}");
        }
        assert!(rates[0] > 0.9 && rates[14] < 0.25, "{rates:?}");
    }

    #[test]
    fn unknown_mpl_is_rejected() {
        let r = simulate(
            &ModelSpec::default(),
            &ErrorSpec::default(),
            &Population::Fixed(theta()),
            1,
            &[12],
            0,
        );
        assert!(r.is_err());
    }
}

//! Covariate-set robustness loop.

use crate::data::RepeatedCrossSection;
use crate::error::Result;
use crate::estimator::{estimate_atet, AtetEstimate, EstimatorConfig};

/// Estimate under one covariate set.
#[derive(Debug, Clone)]
pub struct CovariateSetResult {
    pub name: String,
    pub covariates: Vec<String>,
    pub estimate: AtetEstimate,
}

/// Re-run the main estimator once per named covariate set (same seed for
/// every set, so identical sets give identical estimates).
pub fn covariate_robustness(
    data: &RepeatedCrossSection,
    sets: &[(String, Vec<String>)],
    config: &EstimatorConfig,
) -> Result<Vec<CovariateSetResult>> {
    let mut out = Vec::with_capacity(sets.len());
    for (name, covariates) in sets {
        let restricted = data.with_covariates(covariates)?;
        let estimate = estimate_atet(&restricted, config)?;
        out.push(CovariateSetResult {
            name: name.clone(),
            covariates: covariates.clone(),
            estimate,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetBuilder;
    use rand::Rng;

    fn data_with_noise_covariate(seed: u64) -> RepeatedCrossSection {
        let mut rng = crate::rng::stream_rng(seed, 0, 0);
        let mut b = DatasetBuilder::new()
            .continuous_column("x")
            .continuous_column("noise");
        let mut id = 0u64;
        for d in 0..2u8 {
            for t in 0..2u8 {
                for _ in 0..100 {
                    let x: f64 = rng.gen();
                    let y = f64::from(rng.gen::<f64>() < 0.25 + 0.1 * x);
                    b.push_row(id, y, d, t, &format!("c{}", id % 4), None, &[x, rng.gen()], &[]);
                    id += 1;
                }
            }
        }
        b.build(true).unwrap()
    }

    fn cfg() -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(13);
        cfg.k_folds = 2;
        cfg.cluster_se = false;
        for f in [&mut cfg.outcome_forest, &mut cfg.propensity_forest] {
            f.n_trees = 12;
            f.min_leaf = 10;
        }
        cfg
    }

    #[test]
    fn identical_sets_give_identical_estimates() {
        let data = data_with_noise_covariate(3);
        let sets = vec![
            ("a".to_string(), vec!["x".to_string()]),
            ("b".to_string(), vec!["x".to_string()]),
        ];
        let results = covariate_robustness(&data, &sets, &cfg()).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(
            results[0].estimate.atet.to_bits(),
            results[1].estimate.atet.to_bits()
        );
    }

    #[test]
    fn one_result_per_set_in_order() {
        let data = data_with_noise_covariate(5);
        let sets = vec![
            ("history".to_string(), vec!["x".to_string()]),
            ("all".to_string(), vec!["x".to_string(), "noise".to_string()]),
        ];
        let results = covariate_robustness(&data, &sets, &cfg()).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].name, "history");
        assert_eq!(results[1].name, "all");
        assert_eq!(results[1].covariates.len(), 2);
    }

    #[test]
    fn unknown_covariate_is_an_error() {
        let data = data_with_noise_covariate(7);
        let sets = vec![("bad".to_string(), vec!["zzz".to_string()])];
        assert!(covariate_robustness(&data, &sets, &cfg()).is_err());
    }
}

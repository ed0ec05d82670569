//! Cross-fitted nuisance estimation.
//!
//! For each fold k, the four conditional-mean regressions μ̂_d(t, x) (one
//! regression forest per (d, t) subsample) and the 4-cell propensity
//! ρ̂_{d,t}(x) (one probability forest on the joint cell label) are fitted on
//! all rows outside k and predicted for rows in k, so every prediction comes
//! from a model that never saw its own row.

use crate::data::{DesignMatrix, RepeatedCrossSection, N_CELLS, TREATED_POST};
use crate::error::{Error, Result};
use crate::estimator::folds::CrossFitPlan;
use crate::forest::{fit_probability, fit_regression, ForestConfig};
use crate::rng::{derive_seed, tags};

/// Out-of-fold nuisance predictions, aligned with physical row positions.
#[derive(Debug, Clone)]
pub struct NuisancePredictions {
    /// μ̂_d(t, x_i) indexed by [`crate::data::cell_index`].
    pub mu: Vec<[f64; N_CELLS]>,
    /// ρ̂_{d,t}(x_i) indexed by [`crate::data::cell_index`]; simplex-valued.
    pub rho: Vec<[f64; N_CELLS]>,
    /// Π̂ = share of treated post-treatment rows in the full sample.
    pub pi_hat: f64,
}

impl NuisancePredictions {
    /// Assemble externally supplied (frozen) nuisances.
    pub fn from_parts(mu: Vec<[f64; N_CELLS]>, rho: Vec<[f64; N_CELLS]>, pi_hat: f64) -> Result<Self> {
        if mu.len() != rho.len() {
            return Err(Error::invalid("mu and rho lengths differ"));
        }
        if !(pi_hat > 0.0 && pi_hat < 1.0) {
            return Err(Error::invalid("pi_hat must lie in (0, 1)"));
        }
        for r in &rho {
            let sum: f64 = r.iter().sum();
            if r.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-8 {
                return Err(Error::invalid("rho rows must lie on the 4-simplex"));
            }
        }
        Ok(NuisancePredictions { mu, rho, pi_hat })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
}

/// Share of rows in the treated post-treatment cell.
pub fn pi_hat(data: &RepeatedCrossSection) -> f64 {
    let counts = data.cell_counts();
    counts[TREATED_POST] as f64 / data.n() as f64
}

/// Cross-fit all eight nuisance functions under `plan`.
///
/// Learner seeds are derived from `plan.seed` per (fold, model), overriding
/// the seeds carried by the forest configs, so the result is a pure function
/// of `(data, plan, configs)`.
pub fn cross_fit_nuisances(
    data: &RepeatedCrossSection,
    x: &DesignMatrix,
    plan: &CrossFitPlan,
    propensity_cfg: &ForestConfig,
    outcome_cfg: &ForestConfig,
) -> Result<NuisancePredictions> {
    let n = data.n();
    if x.n() != n {
        return Err(Error::invalid("design matrix does not match data"));
    }
    let labels: Vec<u8> = (0..n).map(|i| data.cell_of(i) as u8).collect();
    let mut mu = vec![[0.0f64; N_CELLS]; n];
    let mut rho = vec![[0.0f64; N_CELLS]; n];

    for k in 0..plan.k {
        let train = plan.rows_outside_fold(data, k);
        let test = plan.rows_in_fold(data, k);
        let x_train = x.take_rows(&train);
        let x_test = x.take_rows(&test);

        let train_labels: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        let rho_cfg = propensity_cfg
            .clone()
            .with_seed(derive_seed(plan.seed, tags::PROPENSITY_MODEL, k as u64));
        let rho_model = fit_probability(&x_train, &train_labels, &rho_cfg).map_err(|e| {
            Error::computation(format!("fold {k}: propensity model: {e}"))
        })?;
        for (row_pos, pred) in test.iter().zip(rho_model.predict(&x_test)) {
            rho[*row_pos] = pred;
        }

        for cell in 0..N_CELLS {
            let cell_rows: Vec<usize> = train
                .iter()
                .copied()
                .filter(|&i| data.cell_of(i) == cell)
                .collect();
            if cell_rows.is_empty() {
                let (d, t) = (cell / 2, cell % 2);
                return Err(Error::computation(format!(
                    "fold {k}: training subsample for cell ({d},{t}) is empty"
                )));
            }
            let x_cell = x.take_rows(&cell_rows);
            let y_cell: Vec<f64> = cell_rows.iter().map(|&i| data.y()[i]).collect();
            let mu_cfg = outcome_cfg.clone().with_seed(derive_seed(
                plan.seed,
                tags::OUTCOME_MODEL,
                (k * N_CELLS + cell) as u64,
            ));
            let model = fit_regression(&x_cell, &y_cell, &mu_cfg).map_err(|e| {
                let (d, t) = (cell / 2, cell % 2);
                Error::computation(format!("fold {k}: outcome model for cell ({d},{t}): {e}"))
            })?;
            for (row_pos, pred) in test.iter().zip(model.predict(&x_test)) {
                mu[*row_pos][cell] = pred;
            }
        }
    }

    Ok(NuisancePredictions {
        mu,
        rho,
        pi_hat: pi_hat(data),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode, DatasetBuilder};
    use crate::estimator::folds::make_folds;
    use rand::Rng;

    fn lean_cfg(min_leaf: usize) -> ForestConfig {
        ForestConfig {
            n_trees: 40,
            mtry: None,
            min_leaf,
            subsample_fraction: 0.6,
            max_depth: None,
            seed: 0,
        }
    }

    /// Uninformative covariates with fixed cell means.
    fn uninformative(n_per_cell: usize, means: [f64; 4], seed: u64) -> RepeatedCrossSection {
        let mut rng = crate::rng::stream_rng(seed, 0, 0);
        let mut b = DatasetBuilder::new().continuous_column("x1").continuous_column("x2");
        let mut id = 0u64;
        for d in 0..2u8 {
            for t in 0..2u8 {
                let m = means[crate::data::cell_index(d, t)];
                for _ in 0..n_per_cell {
                    let y = f64::from(rng.gen::<f64>() < m);
                    b.push_row(id, y, d, t, "c", None, &[rng.gen(), rng.gen()], &[]);
                    id += 1;
                }
            }
        }
        b.build(true).unwrap()
    }

    #[test]
    fn pi_hat_is_the_cell_share() {
        let mut b = DatasetBuilder::new();
        let mut id = 0u64;
        for (d, t, n) in [(0u8, 0u8, 30usize), (0, 1, 25), (1, 0, 20), (1, 1, 25)] {
            for _ in 0..n {
                b.push_row(id, 0.0, d, t, "c", None, &[], &[]);
                id += 1;
            }
        }
        let data = b.build(true).unwrap();
        assert_eq!(pi_hat(&data), 0.25);
    }

    #[test]
    fn out_of_fold_predictions_ignore_own_fold_outcomes() {
        let data = uninformative(60, [0.2, 0.4, 0.5, 0.7], 5);
        let (x, _) = encode(&data).unwrap();
        let plan = make_folds(&data, 3, 17).unwrap();
        let preds = cross_fit_nuisances(&data, &x, &plan, &lean_cfg(10), &lean_cfg(10)).unwrap();

        // Perturb outcomes of fold-0 rows only and refit.
        let fold0: Vec<usize> = plan.rows_in_fold(&data, 0);
        let mut y2 = data.y().to_vec();
        for &i in &fold0 {
            y2[i] = 1.0 - y2[i];
        }
        let mut b = DatasetBuilder::new().continuous_column("x1").continuous_column("x2");
        for i in 0..data.n() {
            let x1 = match data.column("x1").unwrap() {
                crate::data::RawColumn::Continuous { values, .. } => values[i],
                _ => unreachable!(),
            };
            let x2 = match data.column("x2").unwrap() {
                crate::data::RawColumn::Continuous { values, .. } => values[i],
                _ => unreachable!(),
            };
            b.push_row(data.ids()[i], y2[i], data.d()[i], data.t()[i], "c", None, &[x1, x2], &[]);
        }
        let data2 = b.build(true).unwrap();
        let (x2m, _) = encode(&data2).unwrap();
        let plan2 = make_folds(&data2, 3, 17).unwrap();
        assert_eq!(plan.fold_of(), plan2.fold_of());
        let preds2 = cross_fit_nuisances(&data2, &x2m, &plan2, &lean_cfg(10), &lean_cfg(10)).unwrap();

        for &i in &fold0 {
            assert_eq!(preds.mu[i], preds2.mu[i], "row {i} mu changed");
            assert_eq!(preds.rho[i], preds2.rho[i], "row {i} rho changed");
        }
    }

    #[test]
    fn uninformative_covariates_recover_cell_means() {
        let means = [0.2, 0.4, 0.5, 0.7];
        let data = uninformative(400, means, 23);
        let (x, _) = encode(&data).unwrap();
        let plan = make_folds(&data, 2, 29).unwrap();
        let preds = cross_fit_nuisances(&data, &x, &plan, &lean_cfg(40), &lean_cfg(40)).unwrap();
        for cell in 0..4 {
            let avg: f64 =
                preds.mu.iter().map(|m| m[cell]).sum::<f64>() / preds.mu.len() as f64;
            // Cell mean plus binomial noise plus forest smoothing.
            assert!(
                (avg - means[cell]).abs() < 0.06,
                "cell {cell}: {avg} vs {}",
                means[cell]
            );
        }
        // Propensities hover near the cell shares (¼ each).
        for cell in 0..4 {
            let avg: f64 =
                preds.rho.iter().map(|r| r[cell]).sum::<f64>() / preds.rho.len() as f64;
            assert!((avg - 0.25).abs() < 0.05, "cell {cell} share {avg}");
        }
    }

    #[test]
    fn frozen_nuisances_validated() {
        assert!(NuisancePredictions::from_parts(
            vec![[0.0; 4]],
            vec![[0.3, 0.3, 0.3, 0.3]], // sums to 1.2
            0.25,
        )
        .is_err());
        assert!(NuisancePredictions::from_parts(vec![[0.0; 4]], vec![[0.25; 4]], 0.0).is_err());
    }
}

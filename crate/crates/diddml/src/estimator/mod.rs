//! Cross-fitted doubly robust ATET estimation.
//!
//! [`estimate_atet`] runs the full pipeline — stratified folds, cross-fitted
//! forest nuisances, propensity trimming, plug-in scores and
//! influence-function inference. [`estimate_from_nuisances`] skips the
//! cross-fit and consumes externally supplied (frozen) nuisances; with exact
//! nuisances it reduces to the plain sample mean of the score.

mod folds;
mod nuisance;
mod score;
mod support;

pub use folds::{make_folds, CrossFitPlan};
pub use nuisance::{cross_fit_nuisances, pi_hat, NuisancePredictions};
pub use score::{score, trim_mask};
pub use support::{common_support_report, GroupSupport, SupportReport};

use serde::{Deserialize, Serialize};

use crate::data::{encode, RepeatedCrossSection, TREATED_POST};
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::stats;

/// When the treated-post share Π̂ is computed relative to trimming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiTiming {
    /// On the full sample, before trimming (default).
    FullSample,
    /// On the post-trim sample.
    PostTrim,
}

/// Configuration of the DiD-DML estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Number of cross-fitting folds (default 10).
    pub k_folds: usize,
    pub seed: u64,
    /// Own-cell propensity threshold below which comparison rows are dropped
    /// (default 0.01).
    pub trim_threshold: f64,
    /// Cluster standard errors at the cluster (country) level (default on).
    pub cluster_se: bool,
    pub outcome_forest: ForestConfig,
    pub propensity_forest: ForestConfig,
    pub pi_timing: PiTiming,
    /// Histogram bins for the common-support report.
    pub support_bins: usize,
    /// Uncovered-mass threshold for flagging a support violation.
    pub support_threshold_mass: f64,
}

impl EstimatorConfig {
    pub fn new(seed: u64) -> Self {
        EstimatorConfig {
            k_folds: 10,
            seed,
            trim_threshold: 0.01,
            cluster_se: true,
            outcome_forest: ForestConfig::regression_default(seed),
            propensity_forest: ForestConfig::probability_default(seed),
            pi_timing: PiTiming::FullSample,
            support_bins: 20,
            support_threshold_mass: 0.01,
        }
    }

    pub fn with_clustering(mut self, on: bool) -> Self {
        self.cluster_se = on;
        self
    }

    pub fn with_folds(mut self, k: usize) -> Self {
        self.k_folds = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::invalid("need at least 2 folds"));
        }
        if !(0.0..0.5).contains(&self.trim_threshold) {
            return Err(Error::invalid("trim threshold must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// ATET point estimate with influence-function inference and diagnostics.
#[derive(Debug, Clone)]
pub struct AtetEstimate {
    pub atet: f64,
    /// Standard error (clustered when requested).
    pub se: f64,
    /// Two-sided normal p-value.
    pub p_value: f64,
    /// atet ± 1.96·se.
    pub ci95: (f64, f64),
    pub n_used: usize,
    pub n_trimmed: usize,
    pub n_total: usize,
    /// Treated-post share used in the score.
    pub pi_hat: f64,
    pub clustered: bool,
    pub n_clusters: Option<usize>,
    pub k_folds: Option<usize>,
    pub seed: u64,
    /// Centered influence values ψ̃ᵢ, aligned with physical row positions;
    /// zero for trimmed rows (see `used`).
    pub influence: Vec<f64>,
    pub used: Vec<bool>,
    pub diagnostics: SupportReport,
}

/// Full cross-fitted DiD-DML estimate.
pub fn estimate_atet(data: &RepeatedCrossSection, config: &EstimatorConfig) -> Result<AtetEstimate> {
    config.validate()?;
    if !data.is_assigned() {
        return Err(Error::invalid(
            "dataset has no treatment labels; run the policy join first",
        ));
    }
    let plan = make_folds(data, config.k_folds, config.seed)?;
    let (x, _) = encode(data)?;
    let preds = cross_fit_nuisances(
        data,
        &x,
        &plan,
        &config.propensity_forest,
        &config.outcome_forest,
    )?;
    finish(data, &preds, config, Some(config.k_folds))
}

/// Estimate from externally supplied nuisances (no cross-fit).
pub fn estimate_from_nuisances(
    data: &RepeatedCrossSection,
    preds: &NuisancePredictions,
    config: &EstimatorConfig,
) -> Result<AtetEstimate> {
    config.validate()?;
    if preds.n() != data.n() {
        return Err(Error::invalid("nuisance predictions do not match data"));
    }
    finish(data, preds, config, None)
}

fn finish(
    data: &RepeatedCrossSection,
    preds: &NuisancePredictions,
    config: &EstimatorConfig,
    k_folds: Option<usize>,
) -> Result<AtetEstimate> {
    let (keep, n_trimmed) = trim_mask(data, preds, config.trim_threshold)?;
    let canon = data.canonical_order();
    let used_rows: Vec<usize> = canon.iter().copied().filter(|&i| keep[i]).collect();
    let n_used = used_rows.len();
    if n_used == 0 {
        return Err(Error::computation("all rows trimmed"));
    }

    let pi = match config.pi_timing {
        PiTiming::FullSample => preds.pi_hat,
        PiTiming::PostTrim => {
            let n11 = used_rows
                .iter()
                .filter(|&&i| data.cell_of(i) == TREATED_POST)
                .count();
            n11 as f64 / n_used as f64
        }
    };
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::computation(format!("degenerate treated-post share {pi}")));
    }

    let mut psi = vec![0.0f64; data.n()];
    let mut sum = 0.0f64;
    for &i in &used_rows {
        let v = score(
            data.d()[i],
            data.t()[i],
            data.y()[i],
            &preds.mu[i],
            &preds.rho[i],
            pi,
        )?;
        psi[i] = v;
        sum += v;
    }
    let atet = sum / n_used as f64;

    // Influence values centered for the estimated Π̂ in the treated-post arm.
    let mut influence = vec![0.0f64; data.n()];
    for &i in &used_rows {
        let dt = f64::from(data.d()[i]) * f64::from(data.t()[i]);
        influence[i] = psi[i] - atet * dt / pi;
    }

    let tilde_used: Vec<f64> = used_rows.iter().map(|&i| influence[i]).collect();
    let (se, n_clusters) = if config.cluster_se {
        let clusters = data.clusters_present();
        let mut sums: std::collections::HashMap<u32, f64> = std::collections::HashMap::new();
        for &i in &used_rows {
            *sums.entry(data.cluster_code(i)).or_insert(0.0) += influence[i];
        }
        let g = sums.len();
        if g < 2 {
            return Err(Error::computation(format!(
                "clustered inference needs at least 2 clusters, found {g}"
            )));
        }
        // Iterate clusters in name order for deterministic summation.
        let mut meat = 0.0f64;
        for code in clusters {
            if let Some(s) = sums.get(&code) {
                meat += s * s;
            }
        }
        let factor = g as f64 / (g as f64 - 1.0);
        (
            (factor * meat / (n_used as f64 * n_used as f64)).sqrt(),
            Some(g),
        )
    } else {
        (
            (stats::population_variance(&tilde_used) / n_used as f64).sqrt(),
            None,
        )
    };

    let p_value = if se > 0.0 {
        stats::normal_two_sided_p(atet / se)
    } else if atet == 0.0 {
        1.0
    } else {
        0.0
    };
    let ci95 = (atet - 1.96 * se, atet + 1.96 * se);
    let diagnostics =
        common_support_report(data, preds, config.support_bins, config.support_threshold_mass);

    Ok(AtetEstimate {
        atet,
        se,
        p_value,
        ci95,
        n_used,
        n_trimmed,
        n_total: data.n(),
        pi_hat: pi,
        clustered: config.cluster_se,
        n_clusters,
        k_folds,
        seed: config.seed,
        influence,
        used: keep,
        diagnostics,
    })
}

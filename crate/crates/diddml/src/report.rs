//! Serializable result records shared by the estimators.
//!
//! Estimates from the DiD-DML and TWFE paths serialize into the same record
//! shape (one column of the results table), so runs can be compared
//! side-by-side; the TWFE record additionally carries its coefficient table.

use serde::{Deserialize, Serialize};

use crate::estimator::{AtetEstimate, EstimatorConfig, SupportReport};
use crate::forest::ForestConfig;
use crate::twfe::TwfeEstimate;

pub const SCHEMA_VERSION: u32 = 1;

/// Learner configuration echoed into result records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerInfo {
    pub outcome_forest: ForestConfig,
    pub propensity_forest: ForestConfig,
}

/// One coefficient of a parametric fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
}

/// One estimate, serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub schema_version: u32,
    /// "diddml", "twfe_binary" or "twfe_continuous".
    pub estimator: String,
    /// Free-form run label (outcome × treatment × covariate set).
    pub label: String,
    pub atet: f64,
    pub se: f64,
    pub p_value: f64,
    pub ci95: [f64; 2],
    pub n_used: usize,
    pub n_trimmed: usize,
    pub n_total: usize,
    pub clustered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_clusters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_folds: Option<usize>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learner: Option<LearnerInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<SupportReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<CoefficientRow>>,
}

impl EstimateRecord {
    pub fn from_diddml(label: &str, est: &AtetEstimate, config: &EstimatorConfig) -> Self {
        EstimateRecord {
            schema_version: SCHEMA_VERSION,
            estimator: "diddml".to_string(),
            label: label.to_string(),
            atet: est.atet,
            se: est.se,
            p_value: est.p_value,
            ci95: [est.ci95.0, est.ci95.1],
            n_used: est.n_used,
            n_trimmed: est.n_trimmed,
            n_total: est.n_total,
            clustered: est.clustered,
            n_clusters: est.n_clusters,
            k_folds: est.k_folds,
            seed: est.seed,
            pi_hat: Some(est.pi_hat),
            learner: Some(LearnerInfo {
                outcome_forest: config.outcome_forest.clone(),
                propensity_forest: config.propensity_forest.clone(),
            }),
            diagnostics: Some(est.diagnostics.clone()),
            coefficients: None,
        }
    }

    pub fn from_twfe(label: &str, estimator: &str, est: &TwfeEstimate, seed: u64) -> Self {
        EstimateRecord {
            schema_version: SCHEMA_VERSION,
            estimator: estimator.to_string(),
            label: label.to_string(),
            atet: est.theta,
            se: est.se,
            p_value: est.p_value,
            ci95: [est.ci95.0, est.ci95.1],
            n_used: est.fit.n,
            n_trimmed: 0,
            n_total: est.fit.n,
            clustered: est.clustered,
            n_clusters: est.n_clusters,
            k_folds: None,
            seed,
            pi_hat: None,
            learner: None,
            diagnostics: None,
            coefficients: Some(
                est.coefficients()
                    .into_iter()
                    .map(|(name, estimate)| CoefficientRow { name, estimate })
                    .collect(),
            ),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serialization");
        s.push('\n');
        s
    }

    pub const CSV_HEADER: &'static str =
        "estimator,label,atet,se,p_value,ci_lo,ci_hi,n,trimmed\n";

    /// One row in the results-table CSV shape.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}\n",
            self.estimator,
            self.label,
            self.atet,
            self.se,
            self.p_value,
            self.ci95[0],
            self.ci95[1],
            self.n_used,
            self.n_trimmed
        )
    }
}

/// Monte Carlo summary for the simulate command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub schema_version: u32,
    pub estimator: String,
    pub n: usize,
    pub replications: usize,
    pub tau_true: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub sd: f64,
    pub mean_se: f64,
    /// Share of replications whose 95% CI covers the true effect.
    pub coverage: f64,
}

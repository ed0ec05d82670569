//! Subgroup heterogeneity with multiple-testing correction.

use serde::{Deserialize, Serialize};

use crate::analysis::bh::bh_adjust;
use crate::data::{RawColumn, RepeatedCrossSection};
use crate::error::{Error, Result};
use crate::estimator::{estimate_atet, AtetEstimate, EstimatorConfig};
use crate::rng::{derive_seed, tags};

/// Row filter over one raw covariate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPredicate {
    /// Categorical column equals the level.
    Equals { column: String, level: String },
    /// Continuous column within the closed range `[lo, hi]`.
    Range { column: String, lo: f64, hi: f64 },
}

/// Named subgroup filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupFilter {
    pub name: String,
    pub predicate: FilterPredicate,
}

/// Estimate (or infeasibility) for one subgroup.
#[derive(Debug, Clone)]
pub struct SubgroupResult {
    pub name: String,
    pub n: usize,
    pub estimate: Option<AtetEstimate>,
    pub adjusted_p: Option<f64>,
    pub infeasible_reason: Option<String>,
}

/// One family of subgroup estimates with BH-adjusted p-values.
#[derive(Debug, Clone)]
pub struct SubgroupGrid {
    pub results: Vec<SubgroupResult>,
}

fn filter_indices(data: &RepeatedCrossSection, pred: &FilterPredicate) -> Result<Vec<usize>> {
    match pred {
        FilterPredicate::Equals { column, level } => match data.column(column) {
            Some(RawColumn::Categorical { levels, codes, .. }) => {
                let code = levels.iter().position(|l| l == level).ok_or_else(|| {
                    Error::invalid(format!("unknown level '{level}' in column '{column}'"))
                })? as u32;
                Ok((0..data.n()).filter(|&i| codes[i] == code).collect())
            }
            Some(_) => Err(Error::invalid(format!("column '{column}' is not categorical"))),
            None => Err(Error::invalid(format!("unknown column '{column}'"))),
        },
        FilterPredicate::Range { column, lo, hi } => match data.column(column) {
            Some(RawColumn::Continuous { values, .. }) => Ok((0..data.n())
                .filter(|&i| values[i] >= *lo && values[i] <= *hi)
                .collect()),
            Some(_) => Err(Error::invalid(format!("column '{column}' is not continuous"))),
            None => Err(Error::invalid(format!("unknown column '{column}'"))),
        },
    }
}

/// Run the main estimator on each subgroup and BH-adjust the p-values across
/// the grid (one family per call). Infeasible subgroups are reported, not
/// fatal; they do not enter the BH family.
pub fn subgroup_run(
    data: &RepeatedCrossSection,
    filters: &[SubgroupFilter],
    config: &EstimatorConfig,
) -> Result<SubgroupGrid> {
    let mut results = Vec::with_capacity(filters.len());
    for (idx, filter) in filters.iter().enumerate() {
        let rows = filter_indices(data, &filter.predicate)?;
        let run_cfg = config
            .clone()
            .with_seed(derive_seed(config.seed, tags::SUBGROUP, idx as u64));
        let outcome = data
            .take_rows(&rows)
            .and_then(|subset| estimate_atet(&subset, &run_cfg));
        match outcome {
            Ok(est) => results.push(SubgroupResult {
                name: filter.name.clone(),
                n: rows.len(),
                estimate: Some(est),
                adjusted_p: None,
                infeasible_reason: None,
            }),
            Err(e) => results.push(SubgroupResult {
                name: filter.name.clone(),
                n: rows.len(),
                estimate: None,
                adjusted_p: None,
                infeasible_reason: Some(e.to_string()),
            }),
        }
    }

    let raw: Vec<f64> = results
        .iter()
        .filter_map(|r| r.estimate.as_ref().map(|e| e.p_value))
        .collect();
    if !raw.is_empty() {
        let adjusted = bh_adjust(&raw)?;
        let mut it = adjusted.into_iter();
        for r in results.iter_mut() {
            if r.estimate.is_some() {
                r.adjusted_p = it.next();
            }
        }
    }
    Ok(SubgroupGrid { results })
}

//! Leave-one-control-unit-out placebo testing.
//!
//! Each control unit (country × analysis period) in turn receives a placebo
//! treatment; the main estimator runs against the remaining control units,
//! and the per-unit placebo effects are pooled.

use crate::data::RepeatedCrossSection;
use crate::error::{Error, Result};
use crate::estimator::{estimate_atet, EstimatorConfig};
use crate::rng::{derive_seed, tags};
use crate::stats;

/// Pooled-inference construction for the placebo p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceboInference {
    /// One-sample t test across the unit-level placebo estimates (default).
    AcrossUnits,
    /// Normal test with the influence-function standard errors pooled across
    /// units.
    PooledInfluence,
}

/// One placebo run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PlaceboUnitEstimate {
    pub unit: String,
    pub atet: f64,
    pub se: f64,
    pub n: usize,
}

/// Placebo estimates with pooled inference.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PlaceboResult {
    pub estimates: Vec<PlaceboUnitEstimate>,
    /// Units attempted but skipped, with reasons.
    pub skipped: Vec<(String, String)>,
    pub mean: f64,
    /// p-value under the default across-units t test.
    pub p_value: f64,
    /// p-value under the pooled influence-function construction.
    pub p_value_pooled: f64,
}

/// Run the placebo analysis on a controls-only dataset.
///
/// `unit_of[i]` names the placebo unit of row `i` (typically
/// `"{country}:{analysis period}"`). Units lacking either period are skipped
/// and logged, as are units whose inner estimate fails. Each inner run uses
/// its own seed derived from the unit's position in the sorted unit list.
pub fn placebo_test(
    controls: &RepeatedCrossSection,
    unit_of: &[String],
    config: &EstimatorConfig,
) -> Result<PlaceboResult> {
    if unit_of.len() != controls.n() {
        return Err(Error::invalid("unit labels do not match data"));
    }
    if controls.d().iter().any(|&d| d != 0) {
        return Err(Error::invalid("placebo input must contain only control rows"));
    }
    let mut units: Vec<String> = unit_of.to_vec();
    units.sort();
    units.dedup();
    if units.len() < 3 {
        return Err(Error::invalid(format!(
            "placebo needs at least 3 control units, found {}",
            units.len()
        )));
    }

    let mut estimates = Vec::new();
    let mut skipped = Vec::new();
    for (idx, unit) in units.iter().enumerate() {
        let rows: Vec<usize> = (0..controls.n()).filter(|&i| &unit_of[i] == unit).collect();
        let has_pre = rows.iter().any(|&i| controls.t()[i] == 0);
        let has_post = rows.iter().any(|&i| controls.t()[i] == 1);
        if !has_pre || !has_post {
            skipped.push((unit.clone(), "unit lacks a period".to_string()));
            continue;
        }
        let mut d = vec![0u8; controls.n()];
        for &i in &rows {
            d[i] = 1;
        }
        let relabeled = match controls.with_treatment(d) {
            Ok(data) => data,
            Err(e) => {
                skipped.push((unit.clone(), e.to_string()));
                continue;
            }
        };
        let run_cfg = config
            .clone()
            .with_seed(derive_seed(config.seed, tags::PLACEBO_UNIT, idx as u64));
        match estimate_atet(&relabeled, &run_cfg) {
            Ok(est) => estimates.push(PlaceboUnitEstimate {
                unit: unit.clone(),
                atet: est.atet,
                se: est.se,
                n: est.n_used,
            }),
            Err(e) => skipped.push((unit.clone(), e.to_string())),
        }
    }

    if estimates.len() < 2 {
        return Err(Error::computation(format!(
            "placebo produced {} estimates; need at least 2 for pooled inference",
            estimates.len()
        )));
    }

    let values: Vec<f64> = estimates.iter().map(|e| e.atet).collect();
    let m = values.len() as f64;
    let mean = stats::mean(&values);

    let sd = stats::sample_variance(&values).sqrt();
    let p_value = if sd > 0.0 {
        stats::t_two_sided_p(mean / (sd / m.sqrt()), m - 1.0)
    } else if mean == 0.0 {
        1.0
    } else {
        0.0
    };

    let pooled_se = (estimates.iter().map(|e| e.se * e.se).sum::<f64>()).sqrt() / m;
    let p_value_pooled = if pooled_se > 0.0 {
        stats::normal_two_sided_p(mean / pooled_se)
    } else if mean == 0.0 {
        1.0
    } else {
        0.0
    };

    Ok(PlaceboResult {
        estimates,
        skipped,
        mean,
        p_value,
        p_value_pooled,
    })
}

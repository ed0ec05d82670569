//! Common-support diagnostics over the treated-post propensity.

use serde::{Deserialize, Serialize};

use crate::data::{RepeatedCrossSection, N_CELLS, TREATED_POST};
use crate::estimator::nuisance::NuisancePredictions;

/// Distribution summary of ρ̂₁₁(x) within one (d, t) group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSupport {
    pub cell: usize,
    pub n: usize,
    /// min, q25, median, q75, max (nearest-rank quantiles).
    pub quantiles: [f64; 5],
    /// Histogram over [0, 1] with `bins` equal-width bins; counts sum to `n`.
    pub hist: Vec<usize>,
}

/// Overlap report across the four groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportReport {
    pub bins: usize,
    pub groups: Vec<GroupSupport>,
    /// Largest fraction of treated-post rows whose ρ̂₁₁ lies outside some
    /// comparison group's observed range.
    pub max_uncovered_mass: f64,
    /// Mass threshold above which `violation` is set (default 0.01).
    pub threshold_mass: f64,
    pub violation: bool,
}

/// Summarize ρ̂₁₁(x) within each group and flag support violations: a
/// violation means more than `threshold_mass` of the treated-post rows fall
/// outside the observed ρ̂₁₁ range of some comparison group.
pub fn common_support_report(
    data: &RepeatedCrossSection,
    preds: &NuisancePredictions,
    bins: usize,
    threshold_mass: f64,
) -> SupportReport {
    let bins = bins.max(1);
    let mut by_cell: [Vec<f64>; N_CELLS] = Default::default();
    for &i in &data.canonical_order() {
        by_cell[data.cell_of(i)].push(preds.rho[i][TREATED_POST]);
    }

    let groups: Vec<GroupSupport> = (0..N_CELLS)
        .map(|cell| {
            let mut vals = by_cell[cell].clone();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite propensities"));
            let mut hist = vec![0usize; bins];
            for &v in &vals {
                let b = ((v * bins as f64) as usize).min(bins - 1);
                hist[b] += 1;
            }
            GroupSupport {
                cell,
                n: vals.len(),
                quantiles: quantiles(&vals),
                hist,
            }
        })
        .collect();

    let reference = &by_cell[TREATED_POST];
    let mut max_uncovered: f64 = 0.0;
    for cell in 0..N_CELLS {
        if cell == TREATED_POST || by_cell[cell].is_empty() || reference.is_empty() {
            continue;
        }
        let lo = by_cell[cell].iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = by_cell[cell].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let outside = reference.iter().filter(|&&v| v < lo || v > hi).count();
        max_uncovered = max_uncovered.max(outside as f64 / reference.len() as f64);
    }

    SupportReport {
        bins,
        groups,
        max_uncovered_mass: max_uncovered,
        threshold_mass,
        violation: max_uncovered > threshold_mass,
    }
}

fn quantiles(sorted: &[f64]) -> [f64; 5] {
    if sorted.is_empty() {
        return [f64::NAN; 5];
    }
    let pick = |q: f64| {
        let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
        sorted[idx]
    };
    [pick(0.0), pick(0.25), pick(0.5), pick(0.75), pick(1.0)]
}

//! Descriptive 2×2 cell summary and the raw difference-in-differences.

use crate::data::{cell_index, RepeatedCrossSection, N_CELLS};
use crate::error::{Error, Result};

/// Per-cell means and counts plus group differences and the raw DiD.
#[derive(Debug, Clone)]
pub struct TwoByTwoTable {
    /// Cell means indexed by [`cell_index`].
    pub cell_mean: [f64; N_CELLS],
    /// Cell counts indexed by [`cell_index`].
    pub cell_n: [usize; N_CELLS],
    /// Post-minus-pre difference in the treated group: ȳ₁₁ − ȳ₁₀.
    pub diff_treated: f64,
    /// Post-minus-pre difference in the control group: ȳ₀₁ − ȳ₀₀.
    pub diff_control: f64,
    /// Raw DiD: (ȳ₁₁ − ȳ₁₀) − (ȳ₀₁ − ȳ₀₀).
    pub raw_did: f64,
}

/// Compute per-(d,t) cell means, counts, group differences and the raw DiD.
/// Errors when any cell is empty.
pub fn two_by_two_table(data: &RepeatedCrossSection) -> Result<TwoByTwoTable> {
    let mut sums = [0.0f64; N_CELLS];
    let mut counts = [0usize; N_CELLS];
    for &i in &data.canonical_order() {
        let cell = data.cell_of(i);
        sums[cell] += data.y()[i];
        counts[cell] += 1;
    }
    for (cell, &c) in counts.iter().enumerate() {
        if c == 0 {
            let (d, t) = (cell / 2, cell % 2);
            return Err(Error::invalid(format!("empty (d,t) cell ({d},{t})")));
        }
    }
    let mut means = [0.0f64; N_CELLS];
    for cell in 0..N_CELLS {
        means[cell] = sums[cell] / counts[cell] as f64;
    }
    let diff_treated = means[cell_index(1, 1)] - means[cell_index(1, 0)];
    let diff_control = means[cell_index(0, 1)] - means[cell_index(0, 0)];
    Ok(TwoByTwoTable {
        cell_mean: means,
        cell_n: counts,
        diff_treated,
        diff_control,
        raw_did: diff_treated - diff_control,
    })
}

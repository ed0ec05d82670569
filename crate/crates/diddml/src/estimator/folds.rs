//! Cross-fitting fold construction, stratified by (d, t) cell.

use rand::Rng;

use crate::data::{RepeatedCrossSection, N_CELLS};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};

/// A partition of the rows into K folds.
///
/// Folds are stratified by (d, t) cell so that every training set (the
/// complement of one fold) contains all four cells. Assignment is keyed to
/// stable row ids: permuting the physical row order leaves each row's fold
/// unchanged.
#[derive(Debug, Clone)]
pub struct CrossFitPlan {
    pub k: usize,
    pub seed: u64,
    fold_of: Vec<usize>,
}

impl CrossFitPlan {
    /// Fold index per physical row position.
    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    /// Row positions in fold `k`, in canonical (id-sorted) order.
    pub fn rows_in_fold(&self, data: &RepeatedCrossSection, k: usize) -> Vec<usize> {
        data.canonical_order()
            .into_iter()
            .filter(|&i| self.fold_of[i] == k)
            .collect()
    }

    /// Row positions outside fold `k`, in canonical order.
    pub fn rows_outside_fold(&self, data: &RepeatedCrossSection, k: usize) -> Vec<usize> {
        data.canonical_order()
            .into_iter()
            .filter(|&i| self.fold_of[i] != k)
            .collect()
    }
}

/// Split the rows into `k` stratified folds.
///
/// Within each cell the (id-sorted) rows are shuffled and dealt round-robin
/// through a counter shared across cells, so fold sizes differ by at most one
/// globally and each fold's cell composition is within one of proportional.
pub fn make_folds(data: &RepeatedCrossSection, k: usize, seed: u64) -> Result<CrossFitPlan> {
    if k < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    let counts = data.cell_counts();
    for (cell, &c) in counts.iter().enumerate() {
        if c < k {
            let (d, t) = (cell / 2, cell % 2);
            return Err(Error::invalid(format!(
                "cell ({d},{t}) has {c} rows, fewer than k = {k}"
            )));
        }
    }

    let canon = data.canonical_order();
    let mut by_cell: [Vec<usize>; N_CELLS] = Default::default();
    for &i in &canon {
        by_cell[data.cell_of(i)].push(i);
    }

    let mut rng = stream_rng(seed, tags::FOLDS, 0);
    let mut fold_of = vec![0usize; data.n()];
    let mut counter = 0usize;
    for cell_rows in &mut by_cell {
        // Fisher-Yates over the cell's canonical row list.
        for j in (1..cell_rows.len()).rev() {
            let r = rng.gen_range(0..=j);
            cell_rows.swap(j, r);
        }
        for &row in cell_rows.iter() {
            fold_of[row] = counter % k;
            counter += 1;
        }
    }
    Ok(CrossFitPlan { k, seed, fold_of })
}

//! CART tree growing shared by the regression and probability forests.
//!
//! Growth is fully deterministic given (matrix, target, config, rng): rows
//! are processed in their given order, candidate features are evaluated in
//! ascending index order, split-point sweeps run in ascending threshold
//! order, and ties keep the first candidate — so equal gains resolve to the
//! lowest feature index, then the lowest threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Leaf payloads: a mean for regression, class frequencies for probability.
pub(crate) trait Leaf: Copy + Send + Sync + 'static {}
impl Leaf for f64 {}
impl Leaf for [f64; 4] {}

#[derive(Debug, Clone)]
pub(crate) enum Node<L: Leaf> {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(L),
}

#[derive(Debug, Clone)]
pub(crate) struct Tree<L: Leaf> {
    pub(crate) nodes: Vec<Node<L>>,
}

impl<L: Leaf> Tree<L> {
    pub(crate) fn predict(&self, x: &[f64]) -> L {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf(v) => return *v,
            }
        }
    }
}

/// Split evaluation for one target kind.
pub(crate) trait SplitEval {
    type LeafValue: Leaf;

    fn leaf_value(&self, rows: &[u32]) -> Self::LeafValue;
    fn is_pure(&self, rows: &[u32]) -> bool;

    /// Best split of a node whose rows are sorted by feature value.
    /// Returns `(last_left_position, gain)` for the strictest-gain split with
    /// both children at least `min_leaf`; `None` when no valid split exists.
    fn best_split(
        &self,
        values: &[f64],
        rows: &[u32],
        min_leaf: usize,
    ) -> Option<(usize, f64)>;
}

/// Variance-reduction criterion for regression targets.
pub(crate) struct VarianceEval<'a> {
    pub y: &'a [f64],
}

impl SplitEval for VarianceEval<'_> {
    type LeafValue = f64;

    fn leaf_value(&self, rows: &[u32]) -> f64 {
        let sum: f64 = rows.iter().map(|&r| self.y[r as usize]).sum();
        sum / rows.len() as f64
    }

    fn is_pure(&self, rows: &[u32]) -> bool {
        let first = self.y[rows[0] as usize];
        rows.iter().all(|&r| self.y[r as usize] == first)
    }

    fn best_split(&self, values: &[f64], rows: &[u32], min_leaf: usize) -> Option<(usize, f64)> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r as usize]).sum();
        let parent_score = total * total / n as f64;
        let mut left_sum = 0.0f64;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n - 1 {
            left_sum += self.y[rows[j] as usize];
            if values[j] == values[j + 1] {
                continue;
            }
            let nl = j + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            // SSE reduction up to the constant Σy²: larger is better.
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
            let gain = score - parent_score;
            if gain > 0.0 && best.map_or(true, |(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best
    }
}

/// Gini-impurity criterion for 4-class cell labels.
pub(crate) struct GiniEval<'a> {
    pub labels: &'a [u8],
}

impl SplitEval for GiniEval<'_> {
    type LeafValue = [f64; 4];

    fn leaf_value(&self, rows: &[u32]) -> [f64; 4] {
        let mut counts = [0.0f64; 4];
        for &r in rows {
            counts[self.labels[r as usize] as usize] += 1.0;
        }
        let total = rows.len() as f64;
        counts.map(|c| c / total)
    }

    fn is_pure(&self, rows: &[u32]) -> bool {
        let first = self.labels[rows[0] as usize];
        rows.iter().all(|&r| self.labels[r as usize] == first)
    }

    fn best_split(&self, values: &[f64], rows: &[u32], min_leaf: usize) -> Option<(usize, f64)> {
        let n = rows.len();
        let mut total = [0.0f64; 4];
        for &r in rows {
            total[self.labels[r as usize] as usize] += 1.0;
        }
        let sq = |c: &[f64; 4]| c.iter().map(|v| v * v).sum::<f64>();
        let parent_score = sq(&total) / n as f64;
        let mut left = [0.0f64; 4];
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n - 1 {
            left[self.labels[rows[j] as usize] as usize] += 1.0;
            if values[j] == values[j + 1] {
                continue;
            }
            let nl = j + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right = [
                total[0] - left[0],
                total[1] - left[1],
                total[2] - left[2],
                total[3] - left[3],
            ];
            // Weighted Gini decrease up to constants: larger is better.
            let score = sq(&left) / nl as f64 + sq(&right) / nr as f64;
            let gain = score - parent_score;
            if gain > 0.0 && best.map_or(true, |(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best
    }
}

pub(crate) struct GrowParams {
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

/// Grow one tree on `rows` (training-matrix row indices, canonical order).
pub(crate) fn grow_tree<E: SplitEval>(
    matrix: &[f64],
    p: usize,
    eval: &E,
    rows: Vec<u32>,
    params: &GrowParams,
    rng: &mut ChaCha8Rng,
) -> Tree<E::LeafValue> {
    let mut grower = Grower {
        matrix,
        p,
        eval,
        params,
        rng,
        nodes: Vec::new(),
        features: (0..p as u32).collect(),
        sort_buf: Vec::new(),
        scratch: Vec::new(),
    };
    let mut idx = rows;
    let len = idx.len();
    grower.grow(&mut idx, 0, len, 0);
    Tree { nodes: grower.nodes }
}

struct Grower<'a, E: SplitEval> {
    matrix: &'a [f64],
    p: usize,
    eval: &'a E,
    params: &'a GrowParams,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node<E::LeafValue>>,
    features: Vec<u32>,
    sort_buf: Vec<(f64, u32)>,
    scratch: Vec<u32>,
}

impl<E: SplitEval> Grower<'_, E> {
    fn value(&self, row: u32, feature: u32) -> f64 {
        self.matrix[row as usize * self.p + feature as usize]
    }

    /// Grow the subtree for `idx[start..end]`; returns its node id.
    fn grow(&mut self, idx: &mut Vec<u32>, start: usize, end: usize, depth: usize) -> u32 {
        let n = end - start;
        let at_depth_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        if n < 2 * self.params.min_leaf || at_depth_limit || self.eval.is_pure(&idx[start..end]) {
            return self.push_leaf(&idx[start..end]);
        }

        // Sample mtry candidate features, then evaluate in ascending index
        // order so gain ties resolve to the lowest feature.
        let mtry = self.params.mtry.min(self.p);
        for k in 0..mtry {
            let j = self.rng.gen_range(k..self.p);
            self.features.swap(k, j);
        }
        self.features[..mtry].sort_unstable();

        let mut best: Option<(u32, f64, f64)> = None; // (feature, threshold, gain)
        for fi in 0..mtry {
            let feature = self.features[fi];
            self.sort_buf.clear();
            for &r in &idx[start..end] {
                self.sort_buf.push((self.value(r, feature), r));
            }
            self.sort_buf
                .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
            let values: Vec<f64> = self.sort_buf.iter().map(|(v, _)| *v).collect();
            let rows: Vec<u32> = self.sort_buf.iter().map(|(_, r)| *r).collect();
            if let Some((pos, gain)) = self.eval.best_split(&values, &rows, self.params.min_leaf) {
                // Midpoint threshold nudged down if rounding reaches the
                // upper value, so `x <= threshold` reproduces the sweep split.
                let lo = values[pos];
                let hi = values[pos + 1];
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                let better = match best {
                    None => gain > 0.0,
                    Some((_, _, g)) => gain > g,
                };
                if better {
                    best = Some((feature, threshold, gain));
                }
            }
        }

        let Some((feature, threshold, _)) = best else {
            return self.push_leaf(&idx[start..end]);
        };

        // Stable partition keeps children in canonical order.
        self.scratch.clear();
        let mut insert = start;
        for k in start..end {
            let r = idx[k];
            if self.value(r, feature) <= threshold {
                idx[insert] = r;
                insert += 1;
            } else {
                self.scratch.push(r);
            }
        }
        idx[insert..end].copy_from_slice(&self.scratch);
        let mid = insert;
        debug_assert!(mid > start && mid < end);

        let slot = self.nodes.len() as u32;
        self.nodes.push(Node::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(idx, start, mid, depth + 1);
        let right = self.grow(idx, mid, end, depth + 1);
        match &mut self.nodes[slot as usize] {
            Node::Split { left: l, right: r, .. } => {
                *l = left;
                *r = right;
            }
            Node::Leaf(_) => unreachable!(),
        }
        slot
    }

    fn push_leaf(&mut self, rows: &[u32]) -> u32 {
        let slot = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf(self.eval.leaf_value(rows)));
        slot
    }
}

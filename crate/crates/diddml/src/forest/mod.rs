//! Deterministic random forests used as nuisance learners.
//!
//! Two flavours share one CART core: [`RegressionForest`] (variance-reduction
//! splits, mean leaves) for the outcome regressions, and [`ProbabilityForest`]
//! (Gini splits, 4-class frequency leaves) for the joint (d, t) cell
//! propensities. Trees are grown on subsamples drawn without replacement,
//! each from its own seed-derived RNG stream, so parallel and serial fits are
//! bit-identical.

mod tree;

use rayon::prelude::*;

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};
use tree::{grow_tree, GiniEval, GrowParams, Tree, VarianceEval};

/// Forest hyperparameters.
///
/// `mtry` defaults to ⌈√p⌉ for probability forests and ⌈p/3⌉ for regression
/// forests when unset. Subsampling is without replacement.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub subsample_fraction: f64,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl ForestConfig {
    /// Defaults for outcome regressions: 500 trees, min_leaf 5.
    pub fn regression_default(seed: u64) -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: None,
            min_leaf: 5,
            subsample_fraction: 0.5,
            max_depth: None,
            seed,
        }
    }

    /// Defaults for cell propensities: 500 trees, min_leaf 10.
    pub fn probability_default(seed: u64) -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: None,
            min_leaf: 10,
            subsample_fraction: 0.5,
            max_depth: None,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if self.min_leaf < 1 {
            return Err(Error::invalid("min_leaf must be at least 1"));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::invalid("subsample_fraction must lie in (0, 1]"));
        }
        if self.mtry == Some(0) {
            return Err(Error::invalid("mtry must be at least 1"));
        }
        Ok(())
    }

    fn resolved_mtry(&self, p: usize, kind: ForestKind) -> usize {
        match self.mtry {
            Some(m) => m.min(p),
            None => match kind {
                ForestKind::Regression => p.div_ceil(3),
                ForestKind::Probability => (p as f64).sqrt().ceil() as usize,
            }
            .max(1),
        }
    }
}

#[derive(Clone, Copy)]
enum ForestKind {
    Regression,
    Probability,
}

/// Subsample size: `⌊fraction·n⌋`, clamped to `[min_leaf, n]`.
fn subsample_size(n: usize, cfg: &ForestConfig) -> usize {
    (((n as f64) * cfg.subsample_fraction).floor() as usize)
        .max(cfg.min_leaf)
        .max(1)
        .min(n)
}

/// Draw `m` of `n` indices without replacement, ascending.
fn draw_subsample(n: usize, m: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u32> {
    use rand::Rng;
    let mut pool: Vec<u32> = (0..n as u32).collect();
    for k in 0..m {
        let j = rng.gen_range(k..n);
        pool.swap(k, j);
    }
    pool.truncate(m);
    pool.sort_unstable();
    pool
}

/// Random forest for conditional-mean regression.
#[derive(Debug, Clone)]
pub struct RegressionForest {
    trees: Vec<Tree<f64>>,
}

/// Random forest for 4-class cell-probability estimation. Predictions are
/// convex combinations of leaf frequency vectors and therefore lie on the
/// simplex by construction.
#[derive(Debug, Clone)]
pub struct ProbabilityForest {
    trees: Vec<Tree<[f64; 4]>>,
}

/// Fit a regression forest with CART variance-reduction splits.
pub fn fit_regression(x: &DesignMatrix, y: &[f64], cfg: &ForestConfig) -> Result<RegressionForest> {
    cfg.validate()?;
    let n = x.n();
    let p = x.p();
    if n == 0 {
        return Err(Error::invalid("cannot fit a forest on zero rows"));
    }
    if y.len() != n {
        return Err(Error::invalid("outcome length does not match design matrix"));
    }
    if n < cfg.min_leaf {
        return Err(Error::invalid(format!(
            "need at least min_leaf = {} rows, got {n}",
            cfg.min_leaf
        )));
    }
    if p < 1 {
        return Err(Error::invalid("design matrix must have at least one column"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite outcome value"));
    }
    let params = GrowParams {
        mtry: cfg.resolved_mtry(p, ForestKind::Regression),
        min_leaf: cfg.min_leaf,
        max_depth: cfg.max_depth,
    };
    let m = subsample_size(n, cfg);
    let eval = VarianceEval { y };
    let trees: Vec<Tree<f64>> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, tags::TREE, i as u64);
            let rows = draw_subsample(n, m, &mut rng);
            grow_tree(x.values(), p, &eval, rows, &params, &mut rng)
        })
        .collect();
    Ok(RegressionForest { trees })
}

/// Fit a 4-class probability forest with Gini splits. Every class must be
/// present at least `min_leaf` times.
pub fn fit_probability(
    x: &DesignMatrix,
    labels: &[u8],
    cfg: &ForestConfig,
) -> Result<ProbabilityForest> {
    cfg.validate()?;
    let n = x.n();
    let p = x.p();
    if n == 0 {
        return Err(Error::invalid("cannot fit a forest on zero rows"));
    }
    if labels.len() != n {
        return Err(Error::invalid("label length does not match design matrix"));
    }
    if p < 1 {
        return Err(Error::invalid("design matrix must have at least one column"));
    }
    let mut counts = [0usize; 4];
    for &l in labels {
        if l > 3 {
            return Err(Error::invalid(format!("cell label {l} outside 0..=3")));
        }
        counts[l as usize] += 1;
    }
    for (class, &c) in counts.iter().enumerate() {
        if c < cfg.min_leaf {
            return Err(Error::invalid(format!(
                "cell class {class} has {c} rows, need at least min_leaf = {}",
                cfg.min_leaf
            )));
        }
    }
    let params = GrowParams {
        mtry: cfg.resolved_mtry(p, ForestKind::Probability),
        min_leaf: cfg.min_leaf,
        max_depth: cfg.max_depth,
    };
    let m = subsample_size(n, cfg);
    let eval = GiniEval { labels };
    let trees: Vec<Tree<[f64; 4]>> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, tags::TREE, i as u64);
            let rows = draw_subsample(n, m, &mut rng);
            grow_tree(x.values(), p, &eval, rows, &params, &mut rng)
        })
        .collect();
    Ok(ProbabilityForest { trees })
}

impl RegressionForest {
    /// Prediction for one encoded row: mean of tree predictions, summed in
    /// tree order for determinism.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, m: &DesignMatrix) -> Vec<f64> {
        (0..m.n()).map(|i| self.predict_row(m.row(i))).collect()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Portable structured-text dump for debugging; not a stable interface.
    pub fn dump(&self) -> String {
        dump_trees(&self.trees, |leaf, out| {
            out.push_str(&format!("leaf {leaf}"));
        })
    }
}

impl ProbabilityForest {
    /// Cell-probability prediction for one encoded row; lies on the 4-simplex.
    pub fn predict_row(&self, x: &[f64]) -> [f64; 4] {
        let mut sums = [0.0f64; 4];
        for t in &self.trees {
            let leaf = t.predict(x);
            for (s, v) in sums.iter_mut().zip(leaf) {
                *s += v;
            }
        }
        sums.map(|s| s / self.trees.len() as f64)
    }

    pub fn predict(&self, m: &DesignMatrix) -> Vec<[f64; 4]> {
        (0..m.n()).map(|i| self.predict_row(m.row(i))).collect()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Portable structured-text dump for debugging; not a stable interface.
    pub fn dump(&self) -> String {
        dump_trees(&self.trees, |leaf, out| {
            out.push_str(&format!(
                "leaf {} {} {} {}",
                leaf[0], leaf[1], leaf[2], leaf[3]
            ));
        })
    }
}

fn dump_trees<L: tree::Leaf>(
    trees: &[Tree<L>],
    write_leaf: impl Fn(&L, &mut String),
) -> String {
    let mut out = String::new();
    for (i, t) in trees.iter().enumerate() {
        out.push_str(&format!("tree {i}\n"));
        for (j, node) in t.nodes.iter().enumerate() {
            match node {
                tree::Node::Split { feature, threshold, left, right } => {
                    out.push_str(&format!(
                        "  node {j}: split x{feature} <= {threshold} -> {left} {right}\n"
                    ));
                }
                tree::Node::Leaf(l) => {
                    out.push_str(&format!("  node {j}: "));
                    write_leaf(l, &mut out);
                    out.push('\n');
                }
            }
        }
    }
    out
}

//! Parametric two-way fixed-effects DiD baselines.
//!
//! Least squares runs through a column-pivoted Householder QR so rank
//! deficiency is detected and reported with the offending column names.
//! Standard errors use the CR1 cluster-robust sandwich by default, with a
//! heteroskedasticity-robust sandwich for unclustered runs. Fixed effects are
//! implemented as drop-one dummies; an independent within-transformation path
//! recovers the same treatment coefficient as a cross-check.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{encode_drop_one, RawColumn, RepeatedCrossSection};
use crate::error::{Error, Result};
use crate::stats;

/// Treatment entering the regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentMode {
    /// Binary treated-post indicator d·t (with d and t main effects when
    /// fixed effects are off).
    Binary,
    /// Absolute policy level (price or tax share) taken from a continuous
    /// covariate column.
    Continuous { policy_column: String },
}

/// Specification of one TWFE run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwfeSpec {
    pub treatment: TreatmentMode,
    /// Raw covariate columns entering with drop-one encoding.
    pub covariates: Vec<String>,
    /// Country and year fixed effects (drop-one dummies). When off, binary
    /// mode includes d and t main effects instead.
    pub fixed_effects: bool,
    /// Cluster standard errors at the cluster (country) level.
    pub cluster_se: bool,
}

impl TwfeSpec {
    pub fn binary() -> Self {
        TwfeSpec {
            treatment: TreatmentMode::Binary,
            covariates: Vec::new(),
            fixed_effects: false,
            cluster_se: true,
        }
    }
}

/// Least-squares fit: coefficients, residuals and the pieces needed for
/// sandwich variances.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub n: usize,
    pub k: usize,
    pub rank: usize,
    pub xtx_inv: DMatrix<f64>,
    /// Design matrix, rows in canonical order.
    pub x: DMatrix<f64>,
    /// Norm of the outcome vector, the scale for the orthogonality check.
    pub y_norm: f64,
}

impl OlsFit {
    /// Largest violation of Xᵀe = 0 relative to the problem scale
    /// ‖X_j‖·‖y‖, a residual-orthogonality check.
    pub fn orthogonality_defect(&self) -> f64 {
        let xte = self.x.tr_mul(&self.residuals);
        let mut worst = 0.0f64;
        for j in 0..self.k {
            let col_norm = self.x.column(j).norm();
            let scale = (col_norm * self.y_norm).max(f64::MIN_POSITIVE);
            worst = worst.max(xte[j].abs() / scale);
        }
        worst
    }
}

/// Least squares via column-pivoted Householder QR.
///
/// Errors on rank deficiency, naming the collinear columns.
pub fn ols(x: DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit> {
    let n = x.nrows();
    let k = x.ncols();
    if names.len() != k {
        return Err(Error::invalid("column name count does not match design"));
    }
    if n < k {
        return Err(Error::computation(format!(
            "fewer rows ({n}) than columns ({k})"
        )));
    }

    // Householder QR with column pivoting on the largest remaining norm.
    // After the loop, `r` holds R in its upper triangle for the permuted
    // columns, `qty` holds Qᵀy, and `perm[a]` is the original index of the
    // column in permuted position `a`.
    let mut r = x.clone();
    let mut qty = y.clone();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut col_sq: Vec<f64> = (0..k).map(|j| r.column(j).norm_squared()).collect();

    for step in 0..k {
        let (pivot_off, _) = col_sq[step..]
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        let pivot = step + pivot_off;
        if pivot != step {
            r.swap_columns(step, pivot);
            col_sq.swap(step, pivot);
            perm.swap(step, pivot);
        }

        // Householder reflector for rows step.. of column step.
        let mut alpha = 0.0f64;
        for i in step..n {
            alpha += r[(i, step)] * r[(i, step)];
        }
        alpha = alpha.sqrt();
        if alpha == 0.0 {
            continue; // exactly zero column tail; rank check will catch it
        }
        if r[(step, step)] > 0.0 {
            alpha = -alpha;
        }
        let mut v = DVector::zeros(n - step);
        for i in step..n {
            v[i - step] = r[(i, step)];
        }
        v[0] -= alpha;
        let v_norm_sq = v.norm_squared();
        if v_norm_sq == 0.0 {
            continue;
        }

        r[(step, step)] = alpha;
        for i in step + 1..n {
            r[(i, step)] = 0.0;
        }
        for j in step + 1..k {
            let mut dot = 0.0f64;
            for i in step..n {
                dot += v[i - step] * r[(i, j)];
            }
            let scale = 2.0 * dot / v_norm_sq;
            for i in step..n {
                r[(i, j)] -= scale * v[i - step];
            }
        }
        let mut dot = 0.0f64;
        for i in step..n {
            dot += v[i - step] * qty[i];
        }
        let scale = 2.0 * dot / v_norm_sq;
        for i in step..n {
            qty[i] -= scale * v[i - step];
        }
        // Downdate remaining column norms.
        for (j, sq) in col_sq.iter_mut().enumerate().skip(step + 1) {
            *sq -= r[(step, j)] * r[(step, j)];
        }
    }

    let max_diag = (0..k).map(|j| r[(j, j)].abs()).fold(0.0f64, f64::max);
    let tol = max_diag * (n.max(k) as f64) * f64::EPSILON;
    let rank = (0..k).filter(|&j| r[(j, j)].abs() > tol).count();
    if rank < k {
        let dropped: Vec<&str> = (rank..k).map(|a| names[perm[a]].as_str()).collect();
        return Err(Error::computation(format!(
            "design is rank deficient ({rank} of {k}); collinear columns: {}",
            dropped.join(", ")
        )));
    }

    // Back-substitution for the permuted coefficients.
    let mut beta_perm = DVector::zeros(k);
    for a in (0..k).rev() {
        let mut s = qty[a];
        for b in a + 1..k {
            s -= r[(a, b)] * beta_perm[b];
        }
        beta_perm[a] = s / r[(a, a)];
    }
    let mut beta = DVector::zeros(k);
    for a in 0..k {
        beta[perm[a]] = beta_perm[a];
    }

    // (XᵀX)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ.
    let mut rinv = DMatrix::zeros(k, k);
    for col in 0..k {
        for a in (0..=col).rev() {
            let mut s = if a == col { 1.0 } else { 0.0 };
            for b in a + 1..=col {
                s -= r[(a, b)] * rinv[(b, col)];
            }
            rinv[(a, col)] = s / r[(a, a)];
        }
    }
    let m = &rinv * rinv.transpose();
    let mut xtx_inv = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            xtx_inv[(perm[a], perm[b])] = m[(a, b)];
        }
    }

    let residuals = y - &x * &beta;
    Ok(OlsFit {
        names: names.to_vec(),
        beta,
        residuals,
        n,
        k,
        rank,
        xtx_inv,
        x,
        y_norm: y.norm(),
    })
}

/// CR1 cluster-robust covariance: the sandwich with cluster-summed score
/// outer products and small-sample factor `[G/(G−1)]·[(n−1)/(n−k)]`.
pub fn cluster_robust_vcov(fit: &OlsFit, clusters: &[u32]) -> Result<DMatrix<f64>> {
    if clusters.len() != fit.n {
        return Err(Error::invalid("cluster vector length does not match fit"));
    }
    let k = fit.k;
    let mut scores: HashMap<u32, DVector<f64>> = HashMap::new();
    for i in 0..fit.n {
        let entry = scores
            .entry(clusters[i])
            .or_insert_with(|| DVector::zeros(k));
        let u = fit.residuals[i];
        for j in 0..k {
            entry[j] += fit.x[(i, j)] * u;
        }
    }
    let g = scores.len();
    if g < 2 {
        return Err(Error::computation(format!(
            "clustered inference needs at least 2 clusters, found {g}"
        )));
    }
    let mut meat = DMatrix::zeros(k, k);
    let mut keys: Vec<u32> = scores.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let s = &scores[&key];
        meat += s * s.transpose();
    }
    let (gf, nf, kf) = (g as f64, fit.n as f64, fit.k as f64);
    let c = (gf / (gf - 1.0)) * ((nf - 1.0) / (nf - kf));
    Ok(c * &fit.xtx_inv * meat * &fit.xtx_inv)
}

/// Heteroskedasticity-robust (HC0) sandwich covariance.
pub fn robust_vcov(fit: &OlsFit) -> DMatrix<f64> {
    let k = fit.k;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..fit.n {
        let u2 = fit.residuals[i] * fit.residuals[i];
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += u2 * fit.x[(i, a)] * fit.x[(i, b)];
            }
        }
    }
    &fit.xtx_inv * meat * &fit.xtx_inv
}

/// TWFE estimate: the treatment coefficient with its variance, plus the full
/// coefficient table.
#[derive(Debug, Clone)]
pub struct TwfeEstimate {
    pub theta: f64,
    pub se: f64,
    pub p_value: f64,
    pub ci95: (f64, f64),
    pub theta_name: String,
    pub clustered: bool,
    pub n_clusters: Option<usize>,
    pub fit: OlsFit,
}

impl TwfeEstimate {
    /// Coefficient table as (name, estimate) pairs.
    pub fn coefficients(&self) -> Vec<(String, f64)> {
        self.fit
            .names
            .iter()
            .cloned()
            .zip(self.fit.beta.iter().copied())
            .collect()
    }
}

fn continuous_column<'d>(data: &'d RepeatedCrossSection, name: &str) -> Result<&'d [f64]> {
    match data.column(name) {
        Some(RawColumn::Continuous { values, .. }) => Ok(values),
        Some(_) => Err(Error::invalid(format!("column '{name}' is not continuous"))),
        None => Err(Error::invalid(format!("unknown column '{name}'"))),
    }
}

struct TwfeDesign {
    names: Vec<String>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    clusters: Vec<u32>,
    theta_col: usize,
}

fn build_design(data: &RepeatedCrossSection, spec: &TwfeSpec) -> Result<TwfeDesign> {
    let canon = data.canonical_order();
    let n = canon.len();

    let mut names: Vec<String> = vec!["const".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];

    // Treatment regressor.
    let theta_col = 1usize;
    match &spec.treatment {
        TreatmentMode::Binary => {
            names.push("treated_post".to_string());
            columns.push(
                canon
                    .iter()
                    .map(|&i| f64::from(data.d()[i] * data.t()[i]))
                    .collect(),
            );
        }
        TreatmentMode::Continuous { policy_column } => {
            let values = continuous_column(data, policy_column)?;
            names.push(format!("{policy_column} (level)"));
            columns.push(canon.iter().map(|&i| values[i]).collect());
        }
    }

    if spec.fixed_effects {
        // Country dummies, drop the first by name.
        let present = data.clusters_present();
        for &code in present.iter().skip(1) {
            names.push(format!("country={}", data.cluster_names()[code as usize]));
            columns.push(
                canon
                    .iter()
                    .map(|&i| f64::from(data.cluster_code(i) == code))
                    .collect(),
            );
        }
        // Year dummies when years exist, otherwise the period indicator.
        if let Some(years) = data.years() {
            let mut distinct: Vec<i32> = years.to_vec();
            distinct.sort_unstable();
            distinct.dedup();
            for &yr in distinct.iter().skip(1) {
                names.push(format!("year={yr}"));
                columns.push(canon.iter().map(|&i| f64::from(years[i] == yr)).collect());
            }
        } else {
            names.push("t".to_string());
            columns.push(canon.iter().map(|&i| f64::from(data.t()[i])).collect());
        }
    } else {
        if spec.treatment == TreatmentMode::Binary {
            names.push("d".to_string());
            columns.push(canon.iter().map(|&i| f64::from(data.d()[i])).collect());
        }
        names.push("t".to_string());
        columns.push(canon.iter().map(|&i| f64::from(data.t()[i])).collect());
    }

    // Covariates, drop-one encoded.
    if !spec.covariates.is_empty() {
        let sub = data.with_covariates(&spec.covariates)?;
        let (m, _) = encode_drop_one(&sub)?;
        for (j, name) in m.names.iter().enumerate() {
            names.push(name.clone());
            columns.push(canon.iter().map(|&i| m.row(i)[j]).collect());
        }
    }

    let k = columns.len();
    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let y = DVector::from_fn(n, |i, _| data.y()[canon[i]]);
    let clusters: Vec<u32> = canon.iter().map(|&i| data.cluster_code(i)).collect();
    Ok(TwfeDesign {
        names,
        x,
        y,
        clusters,
        theta_col,
    })
}

/// Fit the TWFE regression and extract the treatment effect θ.
pub fn fit_twfe(data: &RepeatedCrossSection, spec: &TwfeSpec) -> Result<TwfeEstimate> {
    if !data.is_assigned() {
        return Err(Error::invalid(
            "dataset has no treatment labels; run the policy join first",
        ));
    }
    let design = build_design(data, spec)?;
    let fit = ols(design.x, &design.y, &design.names)?;

    let (vcov, n_clusters) = if spec.cluster_se {
        let v = cluster_robust_vcov(&fit, &design.clusters)?;
        let g = design
            .clusters
            .iter()
            .collect::<std::collections::HashSet<_>>()
            .len();
        (v, Some(g))
    } else {
        (robust_vcov(&fit), None)
    };

    let theta = fit.beta[design.theta_col];
    let se = vcov[(design.theta_col, design.theta_col)].max(0.0).sqrt();
    let p_value = if se > 0.0 {
        stats::normal_two_sided_p(theta / se)
    } else if theta == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(TwfeEstimate {
        theta,
        se,
        p_value,
        ci95: (theta - 1.96 * se, theta + 1.96 * se),
        theta_name: design.names[design.theta_col].clone(),
        clustered: spec.cluster_se,
        n_clusters,
        fit,
    })
}

/// θ via the two-way within transformation (iterated demeaning on cluster and
/// year), an independent code path used to cross-check the dummy encoding.
/// Requires `fixed_effects`.
pub fn fit_twfe_within(data: &RepeatedCrossSection, spec: &TwfeSpec) -> Result<f64> {
    if !spec.fixed_effects {
        return Err(Error::invalid("within transformation requires fixed effects"));
    }
    let canon = data.canonical_order();
    let n = canon.len();

    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    match &spec.treatment {
        TreatmentMode::Binary => {
            names.push("treated_post".to_string());
            cols.push(
                canon
                    .iter()
                    .map(|&i| f64::from(data.d()[i] * data.t()[i]))
                    .collect(),
            );
        }
        TreatmentMode::Continuous { policy_column } => {
            let values = continuous_column(data, policy_column)?;
            names.push(format!("{policy_column} (level)"));
            cols.push(canon.iter().map(|&i| values[i]).collect());
        }
    }
    if !spec.covariates.is_empty() {
        let sub = data.with_covariates(&spec.covariates)?;
        let (m, _) = encode_drop_one(&sub)?;
        for (j, name) in m.names.iter().enumerate() {
            names.push(name.clone());
            cols.push(canon.iter().map(|&i| m.row(i)[j]).collect());
        }
    }
    let mut y: Vec<f64> = canon.iter().map(|&i| data.y()[i]).collect();

    let unit_groups: Vec<u32> = canon.iter().map(|&i| data.cluster_code(i)).collect();
    let time_groups: Vec<i64> = match data.years() {
        Some(years) => canon.iter().map(|&i| i64::from(years[i])).collect(),
        None => canon.iter().map(|&i| i64::from(data.t()[i])).collect(),
    };

    // Alternate group demeaning until both directions are centered.
    let demean = |values: &mut [f64], groups_u: &[u32], groups_t: &[i64]| {
        for _ in 0..200 {
            let mut moved = 0.0f64;
            for pass in 0..2 {
                let mut sums: HashMap<i64, (f64, usize)> = HashMap::new();
                for i in 0..values.len() {
                    let key = if pass == 0 {
                        i64::from(groups_u[i])
                    } else {
                        groups_t[i]
                    };
                    let e = sums.entry(key).or_insert((0.0, 0));
                    e.0 += values[i];
                    e.1 += 1;
                }
                for i in 0..values.len() {
                    let key = if pass == 0 {
                        i64::from(groups_u[i])
                    } else {
                        groups_t[i]
                    };
                    let (s, c) = sums[&key];
                    let mean = s / c as f64;
                    values[i] -= mean;
                    moved = moved.max(mean.abs());
                }
            }
            if moved < 1e-13 {
                break;
            }
        }
    };
    demean(&mut y, &unit_groups, &time_groups);
    for col in cols.iter_mut() {
        demean(col, &unit_groups, &time_groups);
    }

    let k = cols.len();
    let x = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    let yv = DVector::from_column_slice(&y);
    let fit = ols(x, &yv, &names)?;
    Ok(fit.beta[0])
}

/// Policy change fed to [`rescale_continuous`].
#[derive(Debug, Clone, Copy)]
pub enum PolicyDelta {
    /// Change in the policy's own units (PPP$ or tax-share fraction).
    Units(f64),
    /// Percent change against a baseline level; converted to units.
    Percent { pct: f64, baseline: f64 },
}

impl PolicyDelta {
    pub fn units(&self) -> f64 {
        match *self {
            PolicyDelta::Units(u) => u,
            PolicyDelta::Percent { pct, baseline } => baseline * pct / 100.0,
        }
    }
}

/// Implied effect of a policy change under a continuous-treatment marginal
/// effect: θ × Δ(units).
pub fn rescale_continuous(theta: f64, delta: PolicyDelta) -> f64 {
    theta * delta.units()
}

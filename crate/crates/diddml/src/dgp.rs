//! Synthetic data generation with known potential outcomes.
//!
//! The generator satisfies the identification assumptions by construction:
//! the same pre-period potential outcome under both treatment arms (no
//! anticipation), a common covariate-conditional trend across groups, and
//! cell probabilities bounded away from 0 and 1 (common support). Binary
//! potential outcomes are built by probability shift — p₁ = clamp(p₀ + τ) —
//! with coupled uniform draws, so the population ATET equals τ exactly
//! whenever the clamp never binds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBuilder, RepeatedCrossSection, TREATED_POST};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tags};

/// Baseline and trend surface shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeForm {
    /// Baseline linear in the covariates, trend constant: a correctly
    /// specified TWFE setting.
    Linear,
    /// Threshold/interaction baseline and a covariate-dependent trend:
    /// additive-linear adjustment is misspecified, forests are not.
    Nonlinear,
}

/// Treatment effect on the probability scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentEffect {
    Constant(f64),
    /// τ(x) = base + slope·(x₁ − ½).
    Heterogeneous { base: f64, slope: f64 },
}

impl TreatmentEffect {
    fn at(&self, x1: f64) -> f64 {
        match *self {
            TreatmentEffect::Constant(tau) => tau,
            TreatmentEffect::Heterogeneous { base, slope } => base + slope * (x1 - 0.5),
        }
    }
}

/// Synthetic data-generating process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub n_clusters: usize,
    pub seed: u64,
    /// Continuous covariates, iid Uniform(0,1).
    pub n_continuous: usize,
    /// Levels of the single categorical covariate (0 disables it).
    pub categorical_levels: usize,
    /// Scale of the logistic index tilting treatment toward high x₁.
    pub assignment_strength: f64,
    /// Scale of the logistic index tilting the period toward high x₂.
    pub period_strength: f64,
    pub outcome_form: OutcomeForm,
    pub effect: TreatmentEffect,
    /// Standard deviation of a cluster intercept on the probability scale
    /// (outcome only, by default).
    pub cluster_effect_sd: f64,
    /// Loading of an unobserved cluster-level trend shock on the treatment
    /// index; positive values reproduce demand-driven price setting, which
    /// biases naive estimates upward.
    pub endogenous_assignment: f64,
    /// Bounds enforced on the four cell probabilities.
    pub support_bounds: (f64, f64),
    /// Largest tolerated fraction of rows whose outcome probabilities hit
    /// the [0.01, 0.99] clamp.
    pub max_escape_fraction: f64,
    /// Force d = 0 everywhere (placebo input).
    pub controls_only: bool,
}

impl DgpSpec {
    /// Linear baseline, constant trend; TWFE with additive covariates is
    /// correctly specified here.
    pub fn linear(n: usize, tau: f64, seed: u64) -> Self {
        DgpSpec {
            n,
            n_clusters: 40,
            seed,
            n_continuous: 2,
            categorical_levels: 3,
            assignment_strength: 1.8,
            period_strength: 0.6,
            outcome_form: OutcomeForm::Linear,
            effect: TreatmentEffect::Constant(tau),
            cluster_effect_sd: 0.0,
            endogenous_assignment: 0.0,
            support_bounds: (0.02, 0.98),
            max_escape_fraction: 0.05,
            controls_only: false,
        }
    }

    /// Threshold baseline and covariate-dependent trend; separates flexible
    /// from additive-linear adjustment.
    pub fn nonlinear(n: usize, tau: f64, seed: u64) -> Self {
        DgpSpec {
            outcome_form: OutcomeForm::Nonlinear,
            ..DgpSpec::linear(n, tau, seed)
        }
    }

    /// Controls-only null process for placebo analyses.
    pub fn controls_null(n: usize, n_clusters: usize, seed: u64) -> Self {
        DgpSpec {
            n_clusters,
            controls_only: true,
            effect: TreatmentEffect::Constant(0.0),
            ..DgpSpec::linear(n, 0.0, seed)
        }
    }
}

/// Potential outcomes of one row at its own period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialOutcomes {
    pub y0: f64,
    pub y1: f64,
}

/// Generated dataset plus ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub data: RepeatedCrossSection,
    /// Per-row potential outcomes under control/treatment at the row's own
    /// period.
    pub potential: Vec<PotentialOutcomes>,
    /// Per-row treatment effect τ(x) on the probability scale.
    pub tau_x: Vec<f64>,
    /// Per-row baseline probability (covariates plus cluster effect).
    pub base_prob: Vec<f64>,
    /// Per-row common trend g(x).
    pub trend: Vec<f64>,
    /// True conditional means μ_d(t, x) per cell index.
    pub mu_true: Vec<[f64; 4]>,
    /// True cell probabilities ρ_{d,t}(x) per cell index.
    pub rho_true: Vec<[f64; 4]>,
    /// Fraction of rows whose outcome probabilities hit the clamp.
    pub escape_fraction: f64,
}

impl GeneratedData {
    /// Finite-sample estimand: mean of Y₁(1) − Y₁(0) over treated-post rows.
    pub fn oracle_atet(&self) -> Result<f64> {
        oracle_atet(&self.data, &self.potential)
    }
}

/// Mean of Y(1) − Y(0) over the treated post-treatment rows.
pub fn oracle_atet(data: &RepeatedCrossSection, potential: &[PotentialOutcomes]) -> Result<f64> {
    if potential.len() != data.n() {
        return Err(Error::invalid(
            "potential-outcome metadata does not match data",
        ));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &i in &data.canonical_order() {
        if data.cell_of(i) == TREATED_POST {
            sum += potential[i].y1 - potential[i].y0;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::computation("no treated post-treatment rows"));
    }
    Ok(sum / count as f64)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < 0.01 {
        (0.01, true)
    } else if p > 0.99 {
        (0.99, true)
    } else {
        (p, false)
    }
}

/// Generate a dataset from the process.
pub fn generate(spec: &DgpSpec) -> Result<GeneratedData> {
    if spec.n == 0 {
        return Err(Error::invalid("dgp: n must be positive"));
    }
    if spec.n_clusters == 0 || spec.n_clusters > spec.n {
        return Err(Error::invalid("dgp: need 1 <= n_clusters <= n"));
    }
    let (lo, hi) = spec.support_bounds;
    if !(lo > 0.0 && hi < 1.0 && lo < hi) {
        return Err(Error::invalid("dgp: support bounds must satisfy 0 < lo < hi < 1"));
    }
    if spec.n_continuous == 0 {
        return Err(Error::invalid("dgp: need at least one continuous covariate"));
    }

    let mut rng = stream_rng(spec.seed, tags::DGP, 0);

    // Cluster-level draws.
    let cluster_intercept: Vec<f64> = (0..spec.n_clusters)
        .map(|_| {
            let z: f64 = rng.gen::<f64>() + rng.gen::<f64>() + rng.gen::<f64>() - 1.5;
            // Irwin-Hall(3) centered: sd ≈ 0.5; scaled to the requested sd.
            z * spec.cluster_effect_sd / 0.5
        })
        .collect();
    let cluster_trend_shock: Vec<f64> = (0..spec.n_clusters)
        .map(|_| {
            let z: f64 = rng.gen::<f64>() + rng.gen::<f64>() + rng.gen::<f64>() - 1.5;
            z * 0.04
        })
        .collect();

    let mut builder = DatasetBuilder::new();
    for j in 0..spec.n_continuous {
        builder = builder.continuous_column(&format!("x{}", j + 1));
    }
    if spec.categorical_levels > 0 {
        builder = builder.categorical_column("grp");
    }

    let mut potential = Vec::with_capacity(spec.n);
    let mut tau_x = Vec::with_capacity(spec.n);
    let mut base_prob = Vec::with_capacity(spec.n);
    let mut trend = Vec::with_capacity(spec.n);
    let mut mu_true = Vec::with_capacity(spec.n);
    let mut rho_true = Vec::with_capacity(spec.n);
    let mut escapes = 0usize;

    for i in 0..spec.n {
        let cluster = i % spec.n_clusters;
        let xs: Vec<f64> = (0..spec.n_continuous).map(|_| rng.gen::<f64>()).collect();
        let level = if spec.categorical_levels > 0 {
            (rng.gen::<f64>() * spec.categorical_levels as f64) as usize % spec.categorical_levels
        } else {
            0
        };
        let x1 = xs[0];
        let x2 = xs.get(1).copied().unwrap_or(0.5);
        let cat_shift = if spec.categorical_levels > 1 {
            (level as f64 - (spec.categorical_levels as f64 - 1.0) / 2.0) * 0.03
        } else {
            0.0
        };

        // Baseline and trend on the probability scale.
        let (f, g) = match spec.outcome_form {
            OutcomeForm::Linear => (
                0.25 + 0.20 * x1 + 0.10 * x2 + cat_shift,
                0.05 + cluster_trend_shock[cluster],
            ),
            OutcomeForm::Nonlinear => (
                0.20 + 0.18 * f64::from(x1 > 0.5) + 0.10 * x2 * f64::from(x1 <= 0.5) + cat_shift,
                -0.03 + 0.16 * f64::from(x1 > 0.5) + cluster_trend_shock[cluster],
            ),
        };
        let b = f + cluster_intercept[cluster];

        // Cell assignment: logistic tilts for treatment and period, cell
        // probabilities as the product, clamped into the support bounds.
        let d_index = match spec.outcome_form {
            OutcomeForm::Linear => {
                spec.assignment_strength * ((x1 - 0.5) + 0.5 * (x2 - 0.5))
            }
            OutcomeForm::Nonlinear => {
                spec.assignment_strength * (f64::from(x1 > 0.5) - 0.5 + 0.4 * (x2 - 0.5))
            }
        } + spec.endogenous_assignment * cluster_trend_shock[cluster];
        let p_d = if spec.controls_only { 0.0 } else { sigmoid(d_index) };
        let p_t = sigmoid(spec.period_strength * (x2 - 0.5));
        let mut cell_p = [
            (1.0 - p_d) * (1.0 - p_t),
            (1.0 - p_d) * p_t,
            p_d * (1.0 - p_t),
            p_d * p_t,
        ];
        if !spec.controls_only {
            for p in cell_p.iter_mut() {
                *p = p.clamp(lo, hi);
            }
            let sum: f64 = cell_p.iter().sum();
            for p in cell_p.iter_mut() {
                *p /= sum;
            }
        }
        let draw: f64 = rng.gen();
        let mut cell = 3;
        let mut acc = 0.0;
        for (c, &p) in cell_p.iter().enumerate() {
            acc += p;
            if draw < acc {
                cell = c;
                break;
            }
        }
        let (d, t) = ((cell / 2) as u8, (cell % 2) as u8);

        // Potential outcomes with coupled uniforms.
        let tau_i = spec.effect.at(x1);
        let (p_pre, esc1) = clamp_prob(b);
        let (p_post0, esc2) = clamp_prob(b + g);
        let (p_post1, esc3) = clamp_prob(p_post0 + tau_i);
        if esc1 || esc2 || esc3 {
            escapes += 1;
        }
        // True conditional means per cell: untreated rows share the control
        // surface; treatment shifts only the post period.
        mu_true.push([p_pre, p_post0, p_pre, p_post1]);
        rho_true.push(cell_p);
        let u_pre: f64 = rng.gen();
        let u_post: f64 = rng.gen();
        let y_pre = f64::from(u_pre < p_pre);
        let y_post0 = f64::from(u_post < p_post0);
        let y_post1 = f64::from(u_post < p_post1);

        let po = if t == 0 {
            PotentialOutcomes { y0: y_pre, y1: y_pre }
        } else {
            PotentialOutcomes { y0: y_post0, y1: y_post1 }
        };
        let y = if d == 1 { po.y1 } else { po.y0 };

        let level_name = format!("l{level}");
        let cat: Vec<&str> = if spec.categorical_levels > 0 {
            vec![level_name.as_str()]
        } else {
            vec![]
        };
        builder.push_row(
            i as u64,
            y,
            d,
            t,
            &format!("c{cluster:03}"),
            None,
            &xs,
            &cat,
        );
        potential.push(po);
        tau_x.push(tau_i);
        base_prob.push(b);
        trend.push(g);
    }

    let escape_fraction = escapes as f64 / spec.n as f64;
    if escape_fraction > spec.max_escape_fraction {
        return Err(Error::computation(format!(
            "dgp infeasible: {:.1}% of outcome probabilities escape the clamp",
            100.0 * escape_fraction
        )));
    }

    let data = builder.build(!spec.controls_only)?;
    Ok(GeneratedData {
        data,
        potential,
        tau_x,
        base_prob,
        trend,
        mu_true,
        rho_true,
        escape_fraction,
    })
}

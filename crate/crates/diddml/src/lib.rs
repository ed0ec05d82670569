//! Difference-in-differences estimation with double machine learning (DiD-DML)
//! for repeated cross-sections.
//!
//! The crate provides:
//!
//! - [`data`] — validated repeated cross-section microdata, CSV ingestion,
//!   deterministic one-hot encoding and descriptive 2×2 tables;
//! - [`policy`] — construction of binary treatments from country-level
//!   price/tax panels via percent-change threshold rules;
//! - [`forest`] — deterministic random forests (regression and 4-class
//!   probability) used as nuisance learners;
//! - [`estimator`] — the cross-fitted doubly robust ATET estimator with
//!   propensity trimming and influence-function inference;
//! - [`twfe`] — parametric two-way fixed-effects DiD baselines with
//!   cluster-robust standard errors;
//! - [`analysis`] — placebo tests, Benjamini–Hochberg correction, subgroup
//!   heterogeneity, elasticity/pass-through derivations and covariate
//!   robustness loops;
//! - [`dgp`] — synthetic data generators with known potential outcomes, the
//!   validation oracle for everything above;
//! - [`report`] — serializable result records shared by the estimators.
//!
//! All estimation entry points are deterministic functions of
//! `(data, config)`: fixed seeds yield bit-identical results regardless of
//! row order or thread count.

pub mod analysis;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod forest;
pub mod policy;
pub mod report;
pub mod twfe;

mod rng;
mod stats;

pub use error::{Error, Result};
pub use rng::derive_seed;

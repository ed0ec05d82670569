//! Placebo testing, multiple-testing correction, subgroup heterogeneity,
//! derived quantities and robustness loops around the main estimators.

mod bh;
mod derived;
mod placebo;
mod robustness;
mod subgroup;

pub use bh::bh_adjust;
pub use derived::{elasticity, pass_through};
pub use placebo::{placebo_test, PlaceboInference, PlaceboResult, PlaceboUnitEstimate};
pub use robustness::{covariate_robustness, CovariateSetResult};
pub use subgroup::{subgroup_run, FilterPredicate, SubgroupFilter, SubgroupGrid, SubgroupResult};

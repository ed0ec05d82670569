//! Run configuration: a TOML file that fully determines a run.
//!
//! A run is reproducible from its resolved config plus the input files it
//! names; every command writes the resolved config into its output directory
//! so outputs can be regenerated from that copy alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use diddml::analysis::{FilterPredicate, PlaceboInference, SubgroupFilter};
use diddml::data::ColumnRoles;
use diddml::dgp::{DgpSpec, OutcomeForm, TreatmentEffect};
use diddml::error::{Error, Result};
use diddml::estimator::{EstimatorConfig, PiTiming};
use diddml::forest::ForestConfig;
use diddml::policy::{AnalysisPeriod, AssignmentRule, Measure, PeriodMap};

fn default_delimiter() -> String {
    ",".to_string()
}

fn default_true() -> bool {
    true
}

/// `[data]`: micro CSV path and column roles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSection {
    pub micro_csv: PathBuf,
    pub outcome: String,
    pub cluster: String,
    #[serde(default)]
    pub treatment: Option<String>,
    #[serde(default)]
    pub period: Option<String>,
    #[serde(default)]
    pub year: Option<String>,
    #[serde(default)]
    pub continuous: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default = "default_true")]
    pub outcome_binary: bool,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
}

impl DataSection {
    pub fn roles(&self) -> Result<ColumnRoles> {
        let delim = self.delimiter.as_bytes();
        if delim.len() != 1 {
            return Err(Error::invalid("delimiter must be a single byte"));
        }
        let mut roles = ColumnRoles::new(&self.outcome, &self.cluster)
            .outcome_binary(self.outcome_binary)
            .delimiter(delim[0]);
        if let Some(t) = &self.treatment {
            roles = roles.treatment(t);
        }
        if let Some(p) = &self.period {
            roles = roles.period(p);
        }
        if let Some(y) = &self.year {
            roles = roles.year(y);
        }
        roles.continuous = self.continuous.clone();
        roles.categorical = self.categorical.clone();
        Ok(roles)
    }
}

/// `[[policy.period]]` entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodSection {
    pub label: String,
    pub pre_year: i32,
    pub post_year: i32,
}

/// `[policy]`: panel path, threshold rule, period stacking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySection {
    pub panel_csv: PathBuf,
    pub measure: Measure,
    #[serde(default)]
    pub treat_threshold_pct: Option<f64>,
    #[serde(default)]
    pub control_band_pct: Option<(f64, f64)>,
    #[serde(default)]
    pub control_exact_zero: Option<bool>,
    #[serde(default)]
    pub round_changes: Option<bool>,
    #[serde(default, rename = "period")]
    pub periods: Vec<PeriodSection>,
}

impl PolicySection {
    pub fn rule(&self) -> Result<AssignmentRule> {
        let mut rule = match self.measure {
            Measure::PricePpp => AssignmentRule::price_default(),
            Measure::TaxShare => AssignmentRule::tax_default(),
        };
        if let Some(t) = self.treat_threshold_pct {
            rule.treat_threshold_pct = t;
        }
        if let Some(band) = self.control_band_pct {
            rule.control_band_pct = band;
        }
        if let Some(z) = self.control_exact_zero {
            rule.control_exact_zero = z;
        }
        if let Some(r) = self.round_changes {
            rule.round_changes = r;
        }
        rule.validate()?;
        Ok(rule)
    }

    pub fn period_map(&self) -> Result<PeriodMap> {
        PeriodMap::new(
            self.periods
                .iter()
                .map(|p| AnalysisPeriod {
                    label: p.label.clone(),
                    pre_year: p.pre_year,
                    post_year: p.post_year,
                })
                .collect(),
        )
    }
}

/// Estimator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Diddml,
    TwfeBinary,
    TwfeContinuous,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Diddml => "diddml",
            Method::TwfeBinary => "twfe_binary",
            Method::TwfeContinuous => "twfe_continuous",
        }
    }
}

/// `[estimator.outcome_forest]` / `[estimator.propensity_forest]` overrides.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ForestSection {
    #[serde(default)]
    pub n_trees: Option<usize>,
    #[serde(default)]
    pub mtry: Option<usize>,
    #[serde(default)]
    pub min_leaf: Option<usize>,
    #[serde(default)]
    pub subsample_fraction: Option<f64>,
    #[serde(default)]
    pub max_depth: Option<usize>,
}

impl ForestSection {
    fn apply(&self, base: &mut ForestConfig) {
        if let Some(v) = self.n_trees {
            base.n_trees = v;
        }
        if self.mtry.is_some() {
            base.mtry = self.mtry;
        }
        if let Some(v) = self.min_leaf {
            base.min_leaf = v;
        }
        if let Some(v) = self.subsample_fraction {
            base.subsample_fraction = v;
        }
        if self.max_depth.is_some() {
            base.max_depth = self.max_depth;
        }
    }
}

fn default_k_folds() -> usize {
    10
}

fn default_trim() -> f64 {
    0.01
}

fn default_covariate_set() -> String {
    "all".to_string()
}

/// `[estimator]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSection {
    pub method: Method,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "default_trim")]
    pub trim_threshold: f64,
    #[serde(default = "default_true")]
    pub cluster_se: bool,
    #[serde(default = "default_covariate_set")]
    pub covariate_set: String,
    /// Continuous-treatment policy-level column (twfe_continuous).
    #[serde(default)]
    pub policy_column: Option<String>,
    /// Country/year fixed effects (TWFE methods).
    #[serde(default = "default_true")]
    pub fixed_effects: bool,
    #[serde(default)]
    pub pi_post_trim: bool,
    #[serde(default)]
    pub outcome_forest: ForestSection,
    #[serde(default)]
    pub propensity_forest: ForestSection,
}

impl EstimatorSection {
    pub fn estimator_config(&self, seed: u64) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(seed);
        cfg.k_folds = self.k_folds;
        cfg.trim_threshold = self.trim_threshold;
        cfg.cluster_se = self.cluster_se;
        if self.pi_post_trim {
            cfg.pi_timing = PiTiming::PostTrim;
        }
        self.outcome_forest.apply(&mut cfg.outcome_forest);
        self.propensity_forest.apply(&mut cfg.propensity_forest);
        cfg
    }
}

/// `[[subgroups]]` entry: exactly one of `equals` / `range`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupSection {
    pub name: String,
    pub column: String,
    #[serde(default)]
    pub equals: Option<String>,
    #[serde(default)]
    pub range: Option<(f64, f64)>,
}

impl SubgroupSection {
    pub fn filter(&self) -> Result<SubgroupFilter> {
        let predicate = match (&self.equals, &self.range) {
            (Some(level), None) => FilterPredicate::Equals {
                column: self.column.clone(),
                level: level.clone(),
            },
            (None, Some((lo, hi))) => FilterPredicate::Range {
                column: self.column.clone(),
                lo: *lo,
                hi: *hi,
            },
            _ => {
                return Err(Error::invalid(format!(
                    "subgroup '{}' needs exactly one of equals/range",
                    self.name
                )))
            }
        };
        Ok(SubgroupFilter {
            name: self.name.clone(),
            predicate,
        })
    }
}

fn default_placebo_inference() -> PlaceboInference {
    PlaceboInference::AcrossUnits
}

/// `[placebo]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceboSection {
    #[serde(default = "default_placebo_inference")]
    pub inference: PlaceboInference,
    #[serde(default)]
    pub hist_bins: Option<usize>,
}

impl Default for PlaceboSection {
    fn default() -> Self {
        PlaceboSection {
            inference: default_placebo_inference(),
            hist_bins: None,
        }
    }
}

/// `[dgp]` for the simulate command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpSection {
    pub n: usize,
    pub tau: f64,
    #[serde(default)]
    pub form: Option<OutcomeForm>,
    pub replications: usize,
    #[serde(default)]
    pub n_clusters: Option<usize>,
    #[serde(default)]
    pub cluster_effect_sd: Option<f64>,
}

impl DgpSection {
    pub fn spec(&self, seed: u64) -> DgpSpec {
        let mut spec = match self.form.unwrap_or(OutcomeForm::Linear) {
            OutcomeForm::Linear => DgpSpec::linear(self.n, self.tau, seed),
            OutcomeForm::Nonlinear => DgpSpec::nonlinear(self.n, self.tau, seed),
        };
        if let Some(c) = self.n_clusters {
            spec.n_clusters = c;
        }
        if let Some(sd) = self.cluster_effect_sd {
            spec.cluster_effect_sd = sd;
        }
        spec.effect = TreatmentEffect::Constant(self.tau);
        spec
    }
}

fn default_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// The whole run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 means the rayon default.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub policy: Option<PolicySection>,
    #[serde(default)]
    pub estimator: Option<EstimatorSection>,
    #[serde(default)]
    pub covariate_sets: std::collections::BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub subgroups: Vec<SubgroupSection>,
    #[serde(default)]
    pub placebo: Option<PlaceboSection>,
    #[serde(default)]
    pub dgp: Option<DgpSection>,
}

impl RunConfig {
    /// Parse a config from TOML text. Does not touch the filesystem.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Load from a file and resolve relative input paths against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Make input paths absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let absolutize = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.data {
            absolutize(&mut d.micro_csv);
        }
        if let Some(p) = &mut self.policy {
            absolutize(&mut p.panel_csv);
        }
        if self.out_dir.is_relative() {
            self.out_dir = base.join(&self.out_dir);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn data_section(&self) -> Result<&DataSection> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::invalid("config has no [data] section"))
    }

    pub fn estimator_section(&self) -> Result<&EstimatorSection> {
        self.estimator
            .as_ref()
            .ok_or_else(|| Error::invalid("config has no [estimator] section"))
    }

    /// Covariate list for the configured set name; an empty or missing "all"
    /// set means every covariate column in the data except `policy_level`,
    /// which is the continuous treatment installed by the policy join, not a
    /// confounder. Name it explicitly in a set to include it.
    pub fn covariate_set(&self, name: &str, available: &[String]) -> Result<Vec<String>> {
        let everything = || -> Vec<String> {
            available
                .iter()
                .filter(|c| c.as_str() != "policy_level")
                .cloned()
                .collect()
        };
        if name == "all" && !self.covariate_sets.contains_key("all") {
            return Ok(everything());
        }
        match self.covariate_sets.get(name) {
            Some(cols) if cols.is_empty() => Ok(everything()),
            Some(cols) => Ok(cols.clone()),
            None => Err(Error::invalid(format!("unknown covariate set '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [data]
            micro_csv = "m.csv"
            outcome = "y"
            cluster = "country"
            treatment = "d"
            period = "t"

            [estimator]
            method = "diddml"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.estimator.as_ref().unwrap().k_folds, 10);
        assert_eq!(cfg.estimator.as_ref().unwrap().trim_threshold, 0.01);
        assert!(cfg.estimator.as_ref().unwrap().cluster_se);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::from_toml_str(
            r#"
            seed = 7
            out_dir = "/tmp/x"
            [data]
            micro_csv = "/abs/m.csv"
            outcome = "y"
            cluster = "c"
            continuous = ["age"]
            [estimator]
            method = "twfe_binary"
            k_folds = 5
            "#,
        )
        .unwrap();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.estimator.as_ref().unwrap().method, Method::TwfeBinary);
        assert_eq!(back.estimator.as_ref().unwrap().k_folds, 5);
    }

    #[test]
    fn invalid_method_rejected() {
        let err = RunConfig::from_toml_str(
            r#"
            [estimator]
            method = "magic"
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("config"), "{err}");
    }

    #[test]
    fn covariate_set_resolution() {
        let mut cfg = RunConfig::from_toml_str("").unwrap();
        let available = vec!["a".to_string(), "b".to_string()];
        assert_eq!(cfg.covariate_set("all", &available).unwrap(), available);
        cfg.covariate_sets.insert("history".into(), vec!["a".into()]);
        assert_eq!(cfg.covariate_set("history", &available).unwrap(), vec!["a".to_string()]);
        assert!(cfg.covariate_set("nope", &available).is_err());
    }
}

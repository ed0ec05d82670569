//! Treatment construction from country-level policy panels.
//!
//! Converts pre/post cigarette price (PPP$ per 20-pack) or tax-share panels
//! into Treated / Control / Excluded labels via percent-change threshold
//! rules, and joins the labels onto microdata, stacking analysis periods
//! into a single binary pre/post indicator.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::data::{RawColumn, RepeatedCrossSection};
use crate::error::{Error, Result};

/// Policy measure a panel record refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Retail price of a 20-pack in PPP$.
    PricePpp,
    /// Total tax as a fraction of the retail price, in (0, 1).
    TaxShare,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::PricePpp => write!(f, "price_ppp"),
            Measure::TaxShare => write!(f, "tax_share"),
        }
    }
}

/// One country × analysis-period policy record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub country: String,
    /// Analysis-period label, e.g. "2012-2014".
    pub period: String,
    pub pre_value: f64,
    pub post_value: f64,
    pub measure: Measure,
}

/// Validated collection of policy records.
#[derive(Debug, Clone)]
pub struct PolicyPanel {
    records: Vec<PolicyRecord>,
}

impl PolicyPanel {
    pub fn new(records: Vec<PolicyRecord>) -> Result<Self> {
        for r in &records {
            if !(r.pre_value > 0.0) {
                return Err(Error::invalid(format!(
                    "{} {}: pre_value must be > 0",
                    r.country, r.period
                )));
            }
            if !(r.post_value >= 0.0) {
                return Err(Error::invalid(format!(
                    "{} {}: post_value must be >= 0",
                    r.country, r.period
                )));
            }
            if r.measure == Measure::TaxShare {
                for (what, v) in [("pre", r.pre_value), ("post", r.post_value)] {
                    if !(v > 0.0 && v < 1.0) {
                        return Err(Error::invalid(format!(
                            "{} {}: tax share {what}_value {v} outside (0,1)",
                            r.country, r.period
                        )));
                    }
                }
            }
        }
        Ok(PolicyPanel { records })
    }

    pub fn records(&self) -> &[PolicyRecord] {
        &self.records
    }

    /// Read a panel from CSV with columns
    /// `country,period,pre_value,post_value,measure`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            country: String,
            period: String,
            pre_value: f64,
            post_value: f64,
            measure: Measure,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            records.push(PolicyRecord {
                country: row.country,
                period: row.period,
                pre_value: row.pre_value,
                post_value: row.post_value,
                measure: row.measure,
            });
        }
        PolicyPanel::new(records)
    }
}

/// Percent change `100·(post − pre)/pre`. `pre` must be positive.
pub fn pct_change(pre: f64, post: f64) -> Result<f64> {
    if !(pre > 0.0) {
        return Err(Error::invalid(format!("pct_change: pre value {pre} must be > 0")));
    }
    Ok(100.0 * (post - pre) / pre)
}

/// Threshold rule mapping a percent change to a treatment label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignmentRule {
    pub measure: Measure,
    /// Treated when the change is strictly above this bound (percent).
    pub treat_threshold_pct: f64,
    /// Closed control band `[lo, hi]` in percent.
    pub control_band_pct: (f64, f64),
    /// Control only when the change rounds to 0.00 at two decimals
    /// (the tax rule; the band is ignored when set).
    pub control_exact_zero: bool,
    /// Round changes to two decimals before threshold comparison.
    /// Off by default; the published tables' rounding convention is not
    /// documented, so the step is exposed here.
    pub round_changes: bool,
}

impl AssignmentRule {
    /// Price rule: treated above +15%, control within ±5%.
    pub fn price_default() -> Self {
        AssignmentRule {
            measure: Measure::PricePpp,
            treat_threshold_pct: 15.0,
            control_band_pct: (-5.0, 5.0),
            control_exact_zero: false,
            round_changes: false,
        }
    }

    /// Tax rule: treated above +2%, control only at exactly 0.00.
    pub fn tax_default() -> Self {
        AssignmentRule {
            measure: Measure::TaxShare,
            treat_threshold_pct: 2.0,
            control_band_pct: (0.0, 0.0),
            control_exact_zero: true,
            round_changes: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.control_band_pct;
        if lo > hi {
            return Err(Error::invalid("control band lower bound above upper bound"));
        }
        if self.treat_threshold_pct <= hi {
            return Err(Error::invalid(
                "treat threshold must lie strictly above the control band",
            ));
        }
        Ok(())
    }

    /// Label for a given percent change.
    pub fn classify(&self, change_pct: f64) -> Label {
        let change = if self.round_changes { round2(change_pct) } else { change_pct };
        if change > self.treat_threshold_pct {
            return Label::Treated;
        }
        let in_control = if self.control_exact_zero {
            round2(change) == 0.0
        } else {
            let (lo, hi) = self.control_band_pct;
            change >= lo && change <= hi
        };
        if in_control {
            Label::Control
        } else {
            Label::Excluded
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Treatment label of a country × analysis-period unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Treated,
    Control,
    Excluded,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Treated => write!(f, "Treated"),
            Label::Control => write!(f, "Control"),
            Label::Excluded => write!(f, "Excluded"),
        }
    }
}

/// One labelled unit with its computed change.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub country: String,
    pub period: String,
    pub measure: Measure,
    pub pre_value: f64,
    pub post_value: f64,
    pub change_pct: f64,
    pub label: Label,
}

/// Exhaustive, mutually exclusive labels for every panel record of the
/// rule's measure.
#[derive(Debug, Clone)]
pub struct TreatmentAssignment {
    pub rule: AssignmentRule,
    pub entries: Vec<AssignmentEntry>,
}

impl TreatmentAssignment {
    pub fn lookup(&self, country: &str, period: &str) -> Option<&AssignmentEntry> {
        self.entries
            .iter()
            .find(|e| e.country == country && e.period == period)
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Emit the assignment as CSV mirroring the published treatment tables
    /// (change in percent at two decimals, D blank for excluded units).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "country", "period", "measure", "pre_value", "post_value", "change_pct", "d", "label",
        ])?;
        for e in &self.entries {
            let d = match e.label {
                Label::Treated => "1",
                Label::Control => "0",
                Label::Excluded => "",
            };
            w.write_record([
                e.country.as_str(),
                e.period.as_str(),
                &e.measure.to_string(),
                &format!("{}", e.pre_value),
                &format!("{}", e.post_value),
                &format!("{:.2}", e.change_pct),
                d,
                &e.label.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Apply a threshold rule to every panel record of the rule's measure.
pub fn assign(panel: &PolicyPanel, rule: &AssignmentRule) -> Result<TreatmentAssignment> {
    rule.validate()?;
    let mut entries = Vec::new();
    for r in panel.records() {
        if r.measure != rule.measure {
            continue;
        }
        let change = pct_change(r.pre_value, r.post_value)?;
        entries.push(AssignmentEntry {
            country: r.country.clone(),
            period: r.period.clone(),
            measure: r.measure,
            pre_value: r.pre_value,
            post_value: r.post_value,
            change_pct: change,
            label: rule.classify(change),
        });
    }
    Ok(TreatmentAssignment { rule: rule.clone(), entries })
}

/// Stacking map from calendar years to analysis periods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisPeriod {
    pub label: String,
    pub pre_year: i32,
    pub post_year: i32,
}

/// Ordered set of analysis periods with disjoint years.
#[derive(Debug, Clone)]
pub struct PeriodMap {
    periods: Vec<AnalysisPeriod>,
}

impl PeriodMap {
    pub fn new(periods: Vec<AnalysisPeriod>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for p in &periods {
            for y in [p.pre_year, p.post_year] {
                if !seen.insert(y) {
                    return Err(Error::invalid(format!("year {y} appears in two periods")));
                }
            }
        }
        Ok(PeriodMap { periods })
    }

    pub fn periods(&self) -> &[AnalysisPeriod] {
        &self.periods
    }

    /// Map a year to its (period label, pre/post indicator).
    pub fn resolve(&self, year: i32) -> Result<(&str, u8)> {
        for p in &self.periods {
            if year == p.pre_year {
                return Ok((&p.label, 0));
            }
            if year == p.post_year {
                return Ok((&p.label, 1));
            }
        }
        Err(Error::invalid(format!("year {year} not in period map")))
    }
}

/// Row accounting from a join.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JoinReport {
    pub n_joined: usize,
    /// Rows whose country × period had no assignment entry.
    pub dropped_no_assignment: usize,
    /// Rows from units labelled Excluded.
    pub dropped_excluded: usize,
}

/// Install treatment/period labels on raw microdata.
///
/// Each micro row's year is resolved to an analysis period (stacked pre/post
/// indicator), its country × period looked up in the assignment; Excluded
/// units and rows without an assignment entry are dropped (counted in the
/// report). The output gains three covariates: the analysis-period stacking
/// dummy, the unit's pre-treatment policy level (treatment history), and the
/// current policy level at the row's own period (the continuous treatment).
pub fn join(
    assignment: &TreatmentAssignment,
    micro: &RepeatedCrossSection,
    period_map: &PeriodMap,
) -> Result<(RepeatedCrossSection, JoinReport)> {
    let years = micro
        .years()
        .ok_or_else(|| Error::invalid("join requires a year column on the microdata"))?;

    let lookup: HashMap<(&str, &str), &AssignmentEntry> = assignment
        .entries
        .iter()
        .map(|e| ((e.country.as_str(), e.period.as_str()), e))
        .collect();

    let mut keep = Vec::new();
    let mut d = Vec::new();
    let mut t = Vec::new();
    let mut period_labels = Vec::new();
    let mut pre_levels = Vec::new();
    let mut current_levels = Vec::new();
    let mut report = JoinReport::default();

    for i in 0..micro.n() {
        let (label, t_i) = period_map.resolve(years[i])?;
        let country = micro.cluster_name(i);
        let entry = match lookup.get(&(country, label)) {
            Some(e) => e,
            None => {
                report.dropped_no_assignment += 1;
                continue;
            }
        };
        match entry.label {
            Label::Excluded => {
                report.dropped_excluded += 1;
                continue;
            }
            Label::Treated => d.push(1u8),
            Label::Control => d.push(0u8),
        }
        keep.push(i);
        t.push(t_i);
        period_labels.push(label.to_string());
        pre_levels.push(entry.pre_value);
        current_levels.push(if t_i == 1 { entry.post_value } else { entry.pre_value });
    }

    let extra = vec![
        crate::data::categorical_from_strings("analysis_period".to_string(), period_labels),
        RawColumn::Continuous {
            name: "pre_policy_level".to_string(),
            values: pre_levels,
        },
        RawColumn::Continuous {
            name: "policy_level".to_string(),
            values: current_levels,
        },
    ];
    let joined = micro.with_labels(&keep, d, t, extra)?;
    report.n_joined = joined.n();
    Ok((joined, report))
}

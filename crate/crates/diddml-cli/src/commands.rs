//! Command implementations shared by the binary and the integration tests.

use std::path::{Path, PathBuf};

use serde::Serialize;

use diddml::analysis::{placebo_test, subgroup_run, PlaceboInference, PlaceboResult};
use diddml::data::{load_csv, LoadReport, RepeatedCrossSection};
use diddml::dgp::generate;
use diddml::error::{Error, Result};
use diddml::estimator::estimate_atet;
use diddml::policy::{assign, join, JoinReport, PolicyPanel, TreatmentAssignment};
use diddml::report::{EstimateRecord, MonteCarloSummary, SCHEMA_VERSION};
use diddml::twfe::{fit_twfe, TreatmentMode, TwfeSpec};

use crate::config::{Method, PlaceboSection, RunConfig};
use crate::plot::error_bar_svg;

/// Replication tag for seed derivation in the simulate command.
const REPLICATION_TAG: u64 = 0x08;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Load the config, apply overrides, set up the thread pool and the output
/// directory, and write the resolved config copy.
pub fn prepare_run(config_path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.out_dir = out.clone();
    }
    if let Some(threads) = overrides.threads {
        cfg.threads = threads;
    }
    if cfg.threads > 0 {
        // Ignore the error when a global pool already exists (tests run
        // multiple commands in one process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml())?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::computation(format!("serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Loaded microdata with join bookkeeping.
pub struct PreparedData {
    pub data: RepeatedCrossSection,
    pub load: LoadReport,
    pub assignment: Option<TreatmentAssignment>,
    pub join: Option<JoinReport>,
}

/// Load the micro CSV and, when a `[policy]` section exists, construct and
/// join the treatment assignment.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let data_cfg = cfg.data_section()?;
    let (data, load) = load_csv(&data_cfg.micro_csv, &data_cfg.roles()?)?;
    if let Some(policy) = &cfg.policy {
        let panel_file = std::fs::File::open(&policy.panel_csv).map_err(|e| {
            Error::invalid(format!("cannot read panel {}: {e}", policy.panel_csv.display()))
        })?;
        let panel = PolicyPanel::from_csv_reader(panel_file)?;
        let assignment = assign(&panel, &policy.rule()?)?;
        let (joined, join_report) = join(&assignment, &data, &policy.period_map()?)?;
        Ok(PreparedData {
            data: joined,
            load,
            assignment: Some(assignment),
            join: Some(join_report),
        })
    } else {
        Ok(PreparedData {
            data,
            load,
            assignment: None,
            join: None,
        })
    }
}

fn covariate_names(data: &RepeatedCrossSection) -> Vec<String> {
    data.columns().iter().map(|c| c.name().to_string()).collect()
}

#[derive(Debug, Serialize)]
struct ValidationCheck {
    name: String,
    passed: bool,
    detail: String,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    schema_version: u32,
    ok: bool,
    checks: Vec<ValidationCheck>,
}

/// `validate`: load and check everything the config names; non-zero exit on
/// any failed check.
pub fn cmd_validate(cfg: &RunConfig) -> Result<()> {
    let mut checks = Vec::new();
    let mut push = |name: &str, outcome: std::result::Result<String, String>| {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        checks.push(ValidationCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    };

    let prepared = match prepare_data(cfg) {
        Ok(p) => {
            push(
                "load",
                Ok(format!(
                    "{} rows loaded, {} dropped for missing core fields",
                    p.load.n_loaded, p.load.dropped_missing_core
                )),
            );
            if let Some(j) = &p.join {
                push(
                    "policy_join",
                    Ok(format!(
                        "{} rows joined, {} without assignment, {} excluded",
                        j.n_joined, j.dropped_no_assignment, j.dropped_excluded
                    )),
                );
            }
            Some(p)
        }
        Err(e) => {
            push("load", Err(e.to_string()));
            None
        }
    };

    if let Some(p) = &prepared {
        let counts = p.data.cell_counts();
        if p.data.is_assigned() {
            push(
                "cells",
                Ok(format!(
                    "(0,0)={} (0,1)={} (1,0)={} (1,1)={}",
                    counts[0], counts[1], counts[2], counts[3]
                )),
            );
            push(
                "two_by_two",
                diddml::data::two_by_two_table(&p.data)
                    .map(|t| {
                        format!(
                            "cell means {:.3}/{:.3}/{:.3}/{:.3}, raw DiD {:+.4}",
                            t.cell_mean[0], t.cell_mean[1], t.cell_mean[2], t.cell_mean[3], t.raw_did
                        )
                    })
                    .map_err(|e| e.to_string()),
            );
        } else {
            push(
                "cells",
                Err("treatment/period labels unassigned and no [policy] section".into()),
            );
        }
        let n_clusters = p.data.clusters_present().len();
        push(
            "clusters",
            if n_clusters >= 2 {
                Ok(format!("{n_clusters} clusters"))
            } else {
                Err(format!("{n_clusters} cluster(s); clustered inference needs 2"))
            },
        );
        if let Some(est) = &cfg.estimator {
            let available = covariate_names(&p.data);
            push(
                "covariate_set",
                cfg.covariate_set(&est.covariate_set, &available)
                    .map(|cols| format!("'{}' -> {} columns", est.covariate_set, cols.len()))
                    .map_err(|e| e.to_string()),
            );
        }
        for sub in &cfg.subgroups {
            let outcome = sub
                .filter()
                .and_then(|f| {
                    // A probe filter run checks the column and level exist.
                    match &f.predicate {
                        diddml::analysis::FilterPredicate::Equals { column, .. }
                        | diddml::analysis::FilterPredicate::Range { column, .. } => {
                            if p.data.column(column).is_none() {
                                return Err(Error::invalid(format!("unknown column '{column}'")));
                            }
                            Ok(())
                        }
                    }
                })
                .map(|_| "ok".to_string())
                .map_err(|e| e.to_string());
            push(&format!("subgroup:{}", sub.name), outcome);
        }
    }

    let ok = checks.iter().all(|c| c.passed);
    let report = ValidationReport {
        schema_version: SCHEMA_VERSION,
        ok,
        checks,
    };
    write_json(&cfg.out_dir.join("validation.json"), &report)?;
    for c in &report.checks {
        println!("[{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    if ok {
        Ok(())
    } else {
        Err(Error::invalid("validation failed"))
    }
}

/// `assign`: emit the treatment-assignment table.
pub fn cmd_assign(cfg: &RunConfig) -> Result<()> {
    let policy = cfg
        .policy
        .as_ref()
        .ok_or_else(|| Error::invalid("assign requires a [policy] section"))?;
    let panel_file = std::fs::File::open(&policy.panel_csv).map_err(|e| {
        Error::invalid(format!("cannot read panel {}: {e}", policy.panel_csv.display()))
    })?;
    let panel = PolicyPanel::from_csv_reader(panel_file)?;
    let assignment = assign(&panel, &policy.rule()?)?;
    let out = cfg.out_dir.join("assignment.csv");
    let file = std::fs::File::create(&out)?;
    assignment.write_csv(file)?;
    println!(
        "assignment: {} treated, {} control, {} excluded -> {}",
        assignment.count(diddml::policy::Label::Treated),
        assignment.count(diddml::policy::Label::Control),
        assignment.count(diddml::policy::Label::Excluded),
        out.display()
    );
    Ok(())
}

fn run_configured_estimator(
    cfg: &RunConfig,
    data: &RepeatedCrossSection,
    seed: u64,
) -> Result<EstimateRecord> {
    let est = cfg.estimator_section()?;
    let available = covariate_names(data);
    let covariates = cfg.covariate_set(&est.covariate_set, &available)?;
    let label = cfg.label.clone().unwrap_or_else(|| "run".to_string());
    match est.method {
        Method::Diddml => {
            let restricted = data.with_covariates(&covariates)?;
            let est_cfg = est.estimator_config(seed);
            let result = estimate_atet(&restricted, &est_cfg)?;
            Ok(EstimateRecord::from_diddml(&label, &result, &est_cfg))
        }
        Method::TwfeBinary => {
            let spec = TwfeSpec {
                treatment: TreatmentMode::Binary,
                covariates,
                fixed_effects: est.fixed_effects,
                cluster_se: est.cluster_se,
            };
            let result = fit_twfe(data, &spec)?;
            Ok(EstimateRecord::from_twfe(&label, "twfe_binary", &result, seed))
        }
        Method::TwfeContinuous => {
            let policy_column = est
                .policy_column
                .clone()
                .unwrap_or_else(|| "policy_level".to_string());
            let covariates = covariates
                .into_iter()
                .filter(|c| c != &policy_column)
                .collect();
            let spec = TwfeSpec {
                treatment: TreatmentMode::Continuous { policy_column },
                covariates,
                fixed_effects: est.fixed_effects,
                cluster_se: est.cluster_se,
            };
            let result = fit_twfe(data, &spec)?;
            Ok(EstimateRecord::from_twfe(&label, "twfe_continuous", &result, seed))
        }
    }
}

/// `estimate`: one configured estimator run; JSON plus results-table CSV row.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<()> {
    let prepared = prepare_data(cfg)?;
    let record = run_configured_estimator(cfg, &prepared.data, cfg.seed)?;
    if let Some(diag) = &record.diagnostics {
        if diag.violation {
            eprintln!(
                "warning: common-support violation: {:.1}% of treated-post rows lie outside a comparison group's propensity range",
                100.0 * diag.max_uncovered_mass
            );
        }
    }
    std::fs::write(cfg.out_dir.join("estimate.json"), record.to_json_pretty())?;
    let mut csv_text = EstimateRecord::CSV_HEADER.to_string();
    csv_text.push_str(&record.to_csv_row());
    std::fs::write(cfg.out_dir.join("estimate.csv"), csv_text)?;
    println!(
        "{}: atet={:+.4} se={:.4} p={:.4} n={} trimmed={}",
        record.estimator, record.atet, record.se, record.p_value, record.n_used, record.n_trimmed
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct PlaceboOutput {
    schema_version: u32,
    inference: PlaceboInference,
    result: PlaceboResult,
}

/// `placebo`: leave-one-control-unit-out placebo loop; JSON plus histogram
/// bin CSV.
pub fn cmd_placebo(cfg: &RunConfig) -> Result<()> {
    let est = cfg.estimator_section()?;
    if est.method != Method::Diddml {
        return Err(Error::invalid("placebo runs on the diddml estimator"));
    }
    let prepared = prepare_data(cfg)?;
    let controls = prepared.data.controls_only()?;
    let available = covariate_names(&controls);
    let covariates = cfg.covariate_set(&est.covariate_set, &available)?;
    let controls = controls.with_covariates(&covariates)?;

    // Placebo unit: country × analysis period when the stacking column
    // exists, country otherwise.
    let unit_of: Vec<String> = match controls.column("analysis_period") {
        Some(diddml::data::RawColumn::Categorical { levels, codes, .. }) => (0..controls.n())
            .map(|i| format!("{}:{}", controls.cluster_name(i), levels[codes[i] as usize]))
            .collect(),
        _ => (0..controls.n())
            .map(|i| controls.cluster_name(i).to_string())
            .collect(),
    };

    let placebo_cfg = cfg.placebo.clone().unwrap_or_default();
    let result = placebo_test(&controls, &unit_of, &est.estimator_config(cfg.seed))?;
    let headline_p = match placebo_cfg.inference {
        PlaceboInference::AcrossUnits => result.p_value,
        PlaceboInference::PooledInfluence => result.p_value_pooled,
    };

    let output = PlaceboOutput {
        schema_version: SCHEMA_VERSION,
        inference: placebo_cfg.inference,
        result: result.clone(),
    };
    write_json(&cfg.out_dir.join("placebo.json"), &output)?;
    write_placebo_histogram(&cfg.out_dir.join("placebo_hist.csv"), &result, &placebo_cfg)?;
    println!(
        "placebo: {} units, mean={:+.4}, p={:.4}",
        result.estimates.len(),
        result.mean,
        headline_p
    );
    Ok(())
}

fn write_placebo_histogram(path: &Path, result: &PlaceboResult, cfg: &PlaceboSection) -> Result<()> {
    let values: Vec<f64> = result.estimates.iter().map(|e| e.atet).collect();
    let bins = cfg.hist_bins.unwrap_or(10).max(1);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(1e-12);
    let mut counts = vec![0usize; bins];
    for &v in &values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut text = String::from("bin_lo,bin_hi,count\n");
    for (b, &c) in counts.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{}\n",
            lo + b as f64 * width,
            lo + (b + 1) as f64 * width,
            c
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SubgroupRow {
    name: String,
    n: usize,
    atet: Option<f64>,
    se: Option<f64>,
    p_value: Option<f64>,
    adjusted_p: Option<f64>,
    n_trimmed: Option<usize>,
    infeasible_reason: Option<String>,
}

#[derive(Debug, Serialize)]
struct HeterogeneityOutput {
    schema_version: u32,
    rows: Vec<SubgroupRow>,
}

/// `heterogeneity`: one estimate per configured subgroup with BH-adjusted
/// p-values across the grid.
pub fn cmd_heterogeneity(cfg: &RunConfig) -> Result<()> {
    let est = cfg.estimator_section()?;
    if est.method != Method::Diddml {
        return Err(Error::invalid("heterogeneity runs on the diddml estimator"));
    }
    if cfg.subgroups.is_empty() {
        return Err(Error::invalid("config has no [[subgroups]]"));
    }
    let prepared = prepare_data(cfg)?;
    let available = covariate_names(&prepared.data);
    let covariates = cfg.covariate_set(&est.covariate_set, &available)?;
    let data = prepared.data.with_covariates(&covariates)?;
    let filters = cfg
        .subgroups
        .iter()
        .map(|s| s.filter())
        .collect::<Result<Vec<_>>>()?;
    let grid = subgroup_run(&data, &filters, &est.estimator_config(cfg.seed))?;

    let rows: Vec<SubgroupRow> = grid
        .results
        .iter()
        .map(|r| SubgroupRow {
            name: r.name.clone(),
            n: r.n,
            atet: r.estimate.as_ref().map(|e| e.atet),
            se: r.estimate.as_ref().map(|e| e.se),
            p_value: r.estimate.as_ref().map(|e| e.p_value),
            adjusted_p: r.adjusted_p,
            n_trimmed: r.estimate.as_ref().map(|e| e.n_trimmed),
            infeasible_reason: r.infeasible_reason.clone(),
        })
        .collect();
    let output = HeterogeneityOutput {
        schema_version: SCHEMA_VERSION,
        rows,
    };
    write_json(&cfg.out_dir.join("heterogeneity.json"), &output)?;

    let mut text = String::from("name,n,atet,se,p_value,adjusted_p,trimmed,status\n");
    for r in &output.rows {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.name,
            r.n,
            fmt(r.atet),
            fmt(r.se),
            fmt(r.p_value),
            fmt(r.adjusted_p),
            r.n_trimmed.map(|v| v.to_string()).unwrap_or_default(),
            if r.infeasible_reason.is_some() { "infeasible" } else { "ok" }
        ));
    }
    std::fs::write(cfg.out_dir.join("heterogeneity.csv"), text)?;
    println!("heterogeneity: {} subgroups", output.rows.len());
    Ok(())
}

/// `simulate`: Monte Carlo replications on the synthetic process; summary
/// JSON plus per-replication CSV.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let dgp = cfg
        .dgp
        .as_ref()
        .ok_or_else(|| Error::invalid("simulate requires a [dgp] section"))?;
    let est = cfg.estimator_section()?;
    if dgp.replications == 0 {
        return Err(Error::invalid("replications must be positive"));
    }

    let mut estimates = Vec::with_capacity(dgp.replications);
    let mut ses = Vec::with_capacity(dgp.replications);
    let mut covered = 0usize;
    let mut rep_rows = String::from("rep,estimate,se,ci_lo,ci_hi,covered\n");
    for r in 0..dgp.replications {
        let rep_seed = diddml::derive_seed(cfg.seed, REPLICATION_TAG, r as u64);
        let generated = generate(&dgp.spec(rep_seed))?;
        let record = run_configured_estimator(cfg, &generated.data, rep_seed ^ 0x5eed)?;
        let cover = record.ci95[0] <= dgp.tau && dgp.tau <= record.ci95[1];
        covered += usize::from(cover);
        rep_rows.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r,
            record.atet,
            record.se,
            record.ci95[0],
            record.ci95[1],
            u8::from(cover)
        ));
        estimates.push(record.atet);
        ses.push(record.se);
    }

    let reps = dgp.replications as f64;
    let mean = estimates.iter().sum::<f64>() / reps;
    let sd = if dgp.replications > 1 {
        (estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps - 1.0)).sqrt()
    } else {
        0.0
    };
    let summary = MonteCarloSummary {
        schema_version: SCHEMA_VERSION,
        estimator: est.method.name().to_string(),
        n: dgp.n,
        replications: dgp.replications,
        tau_true: dgp.tau,
        mean_estimate: mean,
        bias: mean - dgp.tau,
        sd,
        mean_se: ses.iter().sum::<f64>() / reps,
        coverage: covered as f64 / reps,
    };
    write_json(&cfg.out_dir.join("simulate.json"), &summary)?;
    std::fs::write(cfg.out_dir.join("simulate_reps.csv"), rep_rows)?;
    println!(
        "simulate: {} reps, bias={:+.4}, sd={:.4}, coverage={:.3}",
        summary.replications, summary.bias, summary.sd, summary.coverage
    );
    Ok(())
}

/// `plot`: error-bar chart over every estimate record found in a results
/// directory (sorted by file name for a deterministic layout).
pub fn cmd_plot(cfg: &RunConfig, results_dir: Option<&Path>) -> Result<()> {
    let dir = results_dir.unwrap_or(&cfg.out_dir);
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();

    let mut records = Vec::new();
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        if let Ok(record) = serde_json::from_str::<EstimateRecord>(&text) {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_default();
            let name = if record.label == "run" || record.label.is_empty() {
                stem
            } else {
                record.label.clone()
            };
            records.push((name, record));
        }
    }
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "no estimate records found in {}",
            dir.display()
        )));
    }
    let title = cfg.label.clone().unwrap_or_else(|| "estimates".to_string());
    let svg = error_bar_svg(&title, &records);
    std::fs::write(cfg.out_dir.join("plot.svg"), svg)?;
    println!("plot: {} estimates -> plot.svg", records.len());
    Ok(())
}

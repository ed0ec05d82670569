//! End-to-end command tests on synthetic fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use diddml_cli::commands::{self, Overrides};

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        Workspace { _tmp: tmp, root }
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.root.join(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn micro_csv(&self, n: usize, seed: u64) -> PathBuf {
        let spec = diddml::dgp::DgpSpec::linear(n, -0.05, seed);
        let generated = diddml::dgp::generate(&spec).unwrap();
        let mut buf = Vec::new();
        generated.data.write_csv(&mut buf).unwrap();
        let path = self.root.join("micro.csv");
        fs::write(&path, buf).unwrap();
        path
    }
}

fn base_config(micro: &Path, out: &Path) -> String {
    format!(
        r#"
seed = 11
out_dir = "{out}"
label = "synthetic"

[data]
micro_csv = "{micro}"
outcome = "y"
cluster = "cluster"
treatment = "d"
period = "t"
continuous = ["x1", "x2"]
categorical = ["grp"]

[estimator]
method = "diddml"
k_folds = 2
cluster_se = false

[estimator.outcome_forest]
n_trees = 20
min_leaf = 30

[estimator.propensity_forest]
n_trees = 20
min_leaf = 60
"#,
        out = out.display(),
        micro = micro.display()
    )
}

fn run_in_process(config: &Path, f: impl Fn(&diddml_cli::config::RunConfig) -> diddml::Result<()>) {
    let cfg = commands::prepare_run(config, &Overrides::default()).unwrap();
    f(&cfg).unwrap();
}

#[test]
fn estimate_is_byte_identical_across_runs() {
    let ws = Workspace::new();
    let micro = ws.micro_csv(1200, 3);
    let out1 = ws.root.join("run1");
    let out2 = ws.root.join("run2");
    let cfg1 = ws.write("c1.toml", &base_config(&micro, &out1));
    let cfg2 = ws.write("c2.toml", &base_config(&micro, &out2));

    run_in_process(&cfg1, commands::cmd_estimate);
    run_in_process(&cfg2, commands::cmd_estimate);

    let a = fs::read(out1.join("estimate.json")).unwrap();
    let b = fs::read(out2.join("estimate.json")).unwrap();
    assert_eq!(a, b, "estimate.json differs across identical runs");
    let a_csv = fs::read(out1.join("estimate.csv")).unwrap();
    let b_csv = fs::read(out2.join("estimate.csv")).unwrap();
    assert_eq!(a_csv, b_csv);
}

#[test]
fn rerun_from_resolved_config_copy_reproduces_outputs() {
    let ws = Workspace::new();
    let micro = ws.micro_csv(1000, 5);
    let out = ws.root.join("main");
    let cfg_path = ws.write("c.toml", &base_config(&micro, &out));
    run_in_process(&cfg_path, commands::cmd_estimate);
    let original = fs::read(out.join("estimate.json")).unwrap();

    // Re-run from the copy the command wrote, into a fresh directory.
    let copy = out.join("config.toml");
    let out2 = ws.root.join("replay");
    let cfg = commands::prepare_run(
        &copy,
        &Overrides {
            out: Some(out2.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    commands::cmd_estimate(&cfg).unwrap();
    let replayed = fs::read(out2.join("estimate.json")).unwrap();
    assert_eq!(original, replayed);
}

#[test]
fn assign_reproduces_threshold_labels() {
    let ws = Workspace::new();
    let panel = ws.write(
        "panel.csv",
        "country,period,pre_value,post_value,measure\n\
         aa,2018-2020,6.00,7.50,price_ppp\n\
         bb,2018-2020,6.00,6.10,price_ppp\n\
         cc,2018-2020,6.00,6.60,price_ppp\n",
    );
    let out = ws.root.join("out");
    let cfg_path = ws.write(
        "c.toml",
        &format!(
            r#"
out_dir = "{}"
[policy]
panel_csv = "{}"
measure = "price_ppp"
"#,
            out.display(),
            panel.display()
        ),
    );
    run_in_process(&cfg_path, commands::cmd_assign);
    let text = fs::read_to_string(out.join("assignment.csv")).unwrap();
    assert!(text.contains("aa,2018-2020,price_ppp,6,7.5,25.00,1,Treated"), "{text}");
    assert!(text.contains("bb,2018-2020,price_ppp,6,6.1,1.67,0,Control"), "{text}");
    assert!(text.contains("cc,2018-2020,price_ppp,6,6.6,10.00,,Excluded"), "{text}");
}

#[test]
fn policy_join_pipeline_estimates_end_to_end() {
    let ws = Workspace::new();
    // Micro data without treatment labels: outcome depends on the joined
    // treatment via the country.
    let mut rng_state = 88172645463325252u64;
    let mut next = move || {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut csv = String::from("y,country,year,age\n");
    for country in ["aa", "bb", "cc", "dd"] {
        for year in [2018, 2020] {
            for _ in 0..60 {
                let treated_post = country == "aa" && year == 2020;
                let base = 0.3 + if treated_post { -0.1 } else { 0.0 };
                let y = u8::from(next() < base);
                let age = 20.0 + (next() * 40.0).round();
                csv.push_str(&format!("{y},{country},{year},{age}\n"));
            }
        }
    }
    let micro = ws.write("micro.csv", &csv);
    let panel = ws.write(
        "panel.csv",
        "country,period,pre_value,post_value,measure\n\
         aa,2018-2020,6.00,7.50,price_ppp\n\
         bb,2018-2020,5.50,5.60,price_ppp\n\
         cc,2018-2020,7.00,7.10,price_ppp\n\
         dd,2018-2020,6.00,6.80,price_ppp\n",
    );
    let out = ws.root.join("out");
    let cfg_path = ws.write(
        "c.toml",
        &format!(
            r#"
seed = 9
out_dir = "{out}"
[data]
micro_csv = "{micro}"
outcome = "y"
cluster = "country"
year = "year"
continuous = ["age"]

[policy]
panel_csv = "{panel}"
measure = "price_ppp"
[[policy.period]]
label = "2018-2020"
pre_year = 2018
post_year = 2020

[estimator]
method = "twfe_binary"
fixed_effects = false
cluster_se = true
"#,
            out = out.display(),
            micro = micro.display(),
            panel = panel.display()
        ),
    );
    run_in_process(&cfg_path, commands::cmd_estimate);
    let record: diddml::report::EstimateRecord =
        serde_json::from_str(&fs::read_to_string(out.join("estimate.json")).unwrap()).unwrap();
    // aa treated, bb/cc control, dd excluded: 3 countries × 120 rows.
    assert_eq!(record.n_used, 360);
    assert_eq!(record.estimator, "twfe_binary");
    assert!(record.atet < 0.0, "expected a negative effect, got {}", record.atet);
}

#[test]
fn simulate_reports_coverage_in_band() {
    let ws = Workspace::new();
    let out = ws.root.join("out");
    let cfg_path = ws.write(
        "c.toml",
        &format!(
            r#"
seed = 4
out_dir = "{}"
[estimator]
method = "diddml"
k_folds = 2
cluster_se = false
[estimator.outcome_forest]
n_trees = 40
min_leaf = 40
[estimator.propensity_forest]
n_trees = 40
min_leaf = 80

[dgp]
n = 5000
tau = -0.03
replications = 100
"#,
            out.display()
        ),
    );
    run_in_process(&cfg_path, commands::cmd_simulate);
    let summary: diddml::report::MonteCarloSummary =
        serde_json::from_str(&fs::read_to_string(out.join("simulate.json")).unwrap()).unwrap();
    assert_eq!(summary.replications, 100);
    assert!(
        summary.coverage >= 0.90 && summary.coverage <= 0.99,
        "coverage {}",
        summary.coverage
    );
    assert!(summary.bias.abs() < 0.01, "bias {}", summary.bias);
    let reps = fs::read_to_string(out.join("simulate_reps.csv")).unwrap();
    assert_eq!(reps.lines().count(), 101);
}

#[test]
fn plot_embeds_centers_equal_to_atets() {
    let ws = Workspace::new();
    let out = ws.root.join("out");
    fs::create_dir_all(&out).unwrap();
    // Four estimate records dropped into the results dir.
    let mut expected = Vec::new();
    for (i, atet) in [-0.031f64, 0.004, -0.012, 0.02].iter().enumerate() {
        let rec = diddml::report::EstimateRecord {
            schema_version: diddml::report::SCHEMA_VERSION,
            estimator: "diddml".into(),
            label: format!("spec{i}"),
            atet: *atet,
            se: 0.01,
            p_value: 0.5,
            ci95: [atet - 0.0196, atet + 0.0196],
            n_used: 1000,
            n_trimmed: 0,
            n_total: 1000,
            clustered: false,
            n_clusters: None,
            k_folds: Some(2),
            seed: 0,
            pi_hat: None,
            learner: None,
            diagnostics: None,
            coefficients: None,
        };
        fs::write(out.join(format!("est{i}.json")), rec.to_json_pretty()).unwrap();
        expected.push(*atet);
    }
    let cfg_path = ws.write(
        "c.toml",
        &format!("out_dir = \"{}\"\nlabel = \"effects\"\n", out.display()),
    );
    let cfg = commands::prepare_run(&cfg_path, &Overrides::default()).unwrap();
    commands::cmd_plot(&cfg, None).unwrap();

    let svg = fs::read_to_string(out.join("plot.svg")).unwrap();
    assert_eq!(svg.matches("class=\"estimate\"").count(), 4);
    for atet in expected {
        assert!(
            svg.contains(&format!("data-atet=\"{atet}\"")),
            "missing marker for {atet}"
        );
    }
}

#[test]
fn placebo_and_heterogeneity_commands_run() {
    let ws = Workspace::new();
    // Controls-only microdata: 6 clusters, both periods.
    let spec = diddml::dgp::DgpSpec::controls_null(900, 6, 31);
    let generated = diddml::dgp::generate(&spec).unwrap();
    let mut buf = Vec::new();
    generated.data.write_csv(&mut buf).unwrap();
    let micro = ws.root.join("controls.csv");
    fs::write(&micro, buf).unwrap();

    let out = ws.root.join("out");
    let cfg_path = ws.write(
        "c.toml",
        &format!(
            r#"
seed = 2
out_dir = "{out}"
[data]
micro_csv = "{micro}"
outcome = "y"
cluster = "cluster"
period = "t"
continuous = ["x1", "x2"]
categorical = ["grp"]

[estimator]
method = "diddml"
k_folds = 2
cluster_se = false
[estimator.outcome_forest]
n_trees = 10
min_leaf = 15
[estimator.propensity_forest]
n_trees = 10
min_leaf = 15

[[subgroups]]
name = "low-x1"
column = "x1"
range = [0.0, 0.5]
[[subgroups]]
name = "high-x1"
column = "x1"
range = [0.5, 1.0]
"#,
            out = out.display(),
            micro = micro.display()
        ),
    );
    let cfg = commands::prepare_run(&cfg_path, &Overrides::default()).unwrap();
    commands::cmd_placebo(&cfg).unwrap();
    let placebo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("placebo.json")).unwrap()).unwrap();
    assert!(placebo["result"]["estimates"].as_array().unwrap().len() >= 3);
    let hist = fs::read_to_string(out.join("placebo_hist.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,count"));

    // Heterogeneity needs treated rows; reuse the linear DGP.
    let micro2 = ws.micro_csv(1600, 33);
    let het_out = ws.root.join("het");
    let het_cfg = ws.write(
        "het.toml",
        &base_config(&micro2, &het_out).replace(
            "[estimator]",
            r#"
[[subgroups]]
name = "low-x1"
column = "x1"
range = [0.0, 0.5]
[[subgroups]]
name = "high-x1"
column = "x1"
range = [0.5, 1.0]

[estimator]"#,
        ),
    );
    let cfg = commands::prepare_run(&het_cfg, &Overrides::default()).unwrap();
    commands::cmd_heterogeneity(&cfg).unwrap();
    let rows: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(het_out.join("heterogeneity.json")).unwrap())
            .unwrap();
    assert_eq!(rows["rows"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(het_out.join("heterogeneity.csv")).unwrap();
    assert!(csv.starts_with("name,n,atet,se,p_value,adjusted_p,trimmed,status"));
}

#[test]
fn binary_exit_codes_and_validate() {
    let ws = Workspace::new();
    let micro = ws.micro_csv(800, 7);
    let out = ws.root.join("out");
    let cfg_path = ws.write("c.toml", &base_config(&micro, &out));

    let bin = env!("CARGO_BIN_EXE_diddml");
    let ok = Command::new(bin)
        .args(["--config", cfg_path.to_str().unwrap(), "validate"])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&ok.stdout),
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(out.join("validation.json").exists());
    assert!(out.join("config.toml").exists());

    // Broken config: unknown covariate set.
    let bad = base_config(&micro, &ws.root.join("bad_out"))
        .replace("method = \"diddml\"", "method = \"diddml\"\ncovariate_set = \"nope\"");
    let bad_path = ws.write("bad.toml", &bad);
    let fail = Command::new(bin)
        .args(["--config", bad_path.to_str().unwrap(), "validate"])
        .output()
        .unwrap();
    assert!(!fail.status.success());

    // Estimate through the binary as well.
    let est_out = ws.root.join("est_out");
    let est = Command::new(bin)
        .args([
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            est_out.to_str().unwrap(),
            "--seed",
            "77",
            "estimate",
        ])
        .output()
        .unwrap();
    assert!(
        est.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&est.stderr)
    );
    let record: diddml::report::EstimateRecord =
        serde_json::from_str(&fs::read_to_string(est_out.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(record.seed, 77);
}

//! Cross-module pipeline tests: CSV in, assignment, join, estimates out.

use diddml::analysis::covariate_robustness;
use diddml::data::{
    decode_row, encode, load_csv_from_reader, two_by_two_table, ColumnRoles, DatasetBuilder,
    DecodedValue, EncodingSchema, RawColumn,
};
use diddml::dgp::{generate, DgpSpec};
use diddml::estimator::{estimate_atet, EstimatorConfig};
use diddml::forest::ForestConfig;
use diddml::policy::{assign, join, AnalysisPeriod, AssignmentRule, PeriodMap, PolicyPanel};
use diddml::twfe::{fit_twfe, TreatmentMode, TwfeSpec};

use proptest::prelude::*;

fn lean_config(seed: u64) -> EstimatorConfig {
    let mut cfg = EstimatorConfig::new(seed);
    cfg.k_folds = 2;
    cfg.cluster_se = false;
    cfg.outcome_forest = ForestConfig {
        n_trees: 20,
        mtry: None,
        min_leaf: 20,
        subsample_fraction: 0.6,
        max_depth: None,
        seed,
    };
    cfg.propensity_forest = cfg.outcome_forest.clone();
    cfg.propensity_forest.min_leaf = 40;
    cfg
}

/// CSV → panel assignment → join → both estimators, end to end on synthetic
/// microdata with a country-level treatment.
#[test]
fn csv_to_estimates_pipeline() {
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut uniform = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..100 {
        uniform();
    }

    let countries: [(&str, f64, f64); 6] = [
        ("aa", 6.0, 7.8),  // +30% treated
        ("bb", 5.0, 6.2),  // +24% treated
        ("cc", 6.5, 6.6),  // +1.5% control
        ("dd", 7.0, 6.9),  // -1.4% control
        ("ee", 5.5, 5.6),  // +1.8% control
        ("ff", 6.0, 6.7),  // +11.7% excluded
    ];
    let mut micro = String::from("y,country,year,age,gender\n");
    for (country, _, _) in countries {
        let treated = country == "aa" || country == "bb";
        for year in [2018, 2020] {
            for _ in 0..400 {
                let age = (20.0 + uniform() * 50.0).round();
                let gender = if uniform() < 0.5 { "m" } else { "w" };
                let p = 0.35 - 0.002 * (age - 45.0).abs()
                    + if treated && year == 2020 { -0.12 } else { 0.0 };
                let y = u8::from(uniform() < p);
                micro.push_str(&format!("{y},{country},{year},{age},{gender}\n"));
            }
        }
    }
    let roles = ColumnRoles::new("y", "country")
        .year("year")
        .continuous(&["age"])
        .categorical(&["gender"]);
    let (raw, report) = load_csv_from_reader(micro.as_bytes(), &roles).unwrap();
    assert_eq!(report.n_loaded, 4800);

    let mut panel_csv = String::from("country,period,pre_value,post_value,measure\n");
    for (country, pre, post) in countries {
        panel_csv.push_str(&format!("{country},2018-2020,{pre},{post},price_ppp\n"));
    }
    let panel = PolicyPanel::from_csv_reader(panel_csv.as_bytes()).unwrap();
    let assignment = assign(&panel, &AssignmentRule::price_default()).unwrap();
    let period_map = PeriodMap::new(vec![AnalysisPeriod {
        label: "2018-2020".into(),
        pre_year: 2018,
        post_year: 2020,
    }])
    .unwrap();
    let (data, join_report) = join(&assignment, &raw, &period_map).unwrap();
    assert_eq!(join_report.dropped_excluded, 800); // country ff
    assert_eq!(data.n(), 4000);

    let table = two_by_two_table(&data).unwrap();
    assert!(table.raw_did < 0.0, "raw DiD {}", table.raw_did);

    // DiD-DML and the TWFE baseline agree on the sign and rough magnitude.
    let covariates = vec!["age".to_string(), "gender".to_string(), "pre_policy_level".to_string()];
    let dml = estimate_atet(&data.with_covariates(&covariates).unwrap(), &lean_config(5)).unwrap();
    let twfe = fit_twfe(
        &data,
        &TwfeSpec {
            treatment: TreatmentMode::Binary,
            covariates,
            fixed_effects: false,
            cluster_se: true,
        },
    )
    .unwrap();
    assert!(dml.atet < 0.0, "diddml {}", dml.atet);
    assert!(twfe.theta < 0.0, "twfe {}", twfe.theta);
    assert!((dml.atet - twfe.theta).abs() < 0.08);

    // Continuous-treatment variant runs on the joined policy level.
    let cont = fit_twfe(
        &data,
        &TwfeSpec {
            treatment: TreatmentMode::Continuous {
                policy_column: "policy_level".into(),
            },
            covariates: vec!["age".into(), "gender".into()],
            fixed_effects: true,
            cluster_se: true,
        },
    )
    .unwrap();
    assert!(cont.theta < 0.0, "continuous theta {}", cont.theta);
}

/// Raw DiD equals the saturated least-squares interaction coefficient
/// (cross-module identity) on generated data.
#[test]
fn raw_did_equals_saturated_ols() {
    let gen = generate(&DgpSpec::linear(2000, -0.04, 17)).unwrap();
    let table = two_by_two_table(&gen.data).unwrap();
    let est = fit_twfe(
        &gen.data,
        &TwfeSpec {
            treatment: TreatmentMode::Binary,
            covariates: vec![],
            fixed_effects: false,
            cluster_se: false,
        },
    )
    .unwrap();
    assert!((table.raw_did - est.theta).abs() < 1e-12);
}

/// Covariate robustness over nested sets: pure-noise covariates barely move
/// the estimate.
#[test]
fn covariate_sets_with_noise_columns_agree() {
    let gen = generate(&DgpSpec::linear(6000, -0.04, 23)).unwrap();
    let sets = vec![
        ("informative".to_string(), vec!["x1".to_string(), "x2".to_string()]),
        (
            "with_noise".to_string(),
            vec!["x1".to_string(), "x2".to_string(), "grp".to_string()],
        ),
    ];
    let results = covariate_robustness(&gen.data, &sets, &lean_config(29)).unwrap();
    let spread = (results[0].estimate.atet - results[1].estimate.atet).abs();
    let scale = results[0].estimate.se.max(results[1].estimate.se);
    assert!(spread < 2.0 * scale, "spread {spread} vs se {scale}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// encode ∘ decode returns the original raw values for every row.
    #[test]
    fn encode_decode_round_trip(
        rows in prop::collection::vec((0.0f64..100.0, 0usize..4, 0usize..3), 1..40)
    ) {
        let levels = ["a", "b", "c", ""];
        let grades = ["lo", "mid", "hi"];
        let mut b = DatasetBuilder::new()
            .continuous_column("v")
            .categorical_column("l")
            .categorical_column("g");
        for (i, (v, li, gi)) in rows.iter().enumerate() {
            b.push_row(i as u64, 0.0, 0, 0, "c", None, &[*v], &[levels[*li], grades[*gi]]);
        }
        let data = b.build(false).unwrap();
        let (m, schema) = encode(&data).unwrap();
        for i in 0..data.n() {
            let decoded = decode_row(&schema, m.row(i)).unwrap();
            prop_assert_eq!(decoded[0].1.clone(), DecodedValue::Continuous(rows[i].0));
            let expect_level = if levels[rows[i].1].is_empty() {
                diddml::data::MISSING_LEVEL
            } else {
                levels[rows[i].1]
            };
            prop_assert_eq!(decoded[1].1.clone(), DecodedValue::Level(expect_level.to_string()));
            prop_assert_eq!(decoded[2].1.clone(), DecodedValue::Level(grades[rows[i].2].to_string()));
        }
    }

    /// Raising the treat threshold never turns a unit Treated; labels always
    /// partition the panel.
    #[test]
    fn assignment_monotone_and_partitioning(
        changes in prop::collection::vec(-30.0f64..60.0, 1..30),
        threshold_lo in 6.0f64..20.0,
        bump in 0.1f64..20.0,
    ) {
        let records: Vec<diddml::policy::PolicyRecord> = changes
            .iter()
            .enumerate()
            .map(|(i, pct)| diddml::policy::PolicyRecord {
                country: format!("c{i}"),
                period: "p".into(),
                pre_value: 5.0,
                post_value: 5.0 * (1.0 + pct / 100.0),
                measure: diddml::policy::Measure::PricePpp,
            })
            .collect();
        let panel = PolicyPanel::new(records).unwrap();
        let mut rule_lo = AssignmentRule::price_default();
        rule_lo.treat_threshold_pct = threshold_lo;
        let mut rule_hi = rule_lo.clone();
        rule_hi.treat_threshold_pct = threshold_lo + bump;

        let a_lo = assign(&panel, &rule_lo).unwrap();
        let a_hi = assign(&panel, &rule_hi).unwrap();
        use diddml::policy::Label;
        for (lo, hi) in a_lo.entries.iter().zip(&a_hi.entries) {
            if hi.label == Label::Treated {
                prop_assert_eq!(lo.label, Label::Treated);
            }
        }
        for a in [&a_lo, &a_hi] {
            let total = a.count(Label::Treated) + a.count(Label::Control) + a.count(Label::Excluded);
            prop_assert_eq!(total, changes.len());
        }
    }

    /// Unknown categorical levels at predict time are always an error, never
    /// a silent zero row.
    #[test]
    fn unknown_level_always_errors(extra in "[a-z]{4,8}") {
        let mut b = DatasetBuilder::new().categorical_column("g");
        b.push_row(0, 0.0, 0, 0, "c", None, &[], &["known"]);
        let data = b.build(false).unwrap();
        let schema = EncodingSchema::from_data(&data, false, false);

        let mut b2 = DatasetBuilder::new().categorical_column("g");
        b2.push_row(0, 0.0, 0, 0, "c", None, &[], &[extra.as_str()]);
        let other = b2.build(false).unwrap();
        if extra != "known" {
            prop_assert!(schema.encode(&other).is_err());
        }
    }
}

/// On a homogeneous process, subgroup estimates agree within Monte Carlo
/// noise: every pair within three pooled standard errors.
#[test]
fn homogeneous_dgp_subgroups_agree() {
    use diddml::analysis::{subgroup_run, FilterPredicate, SubgroupFilter};
    let gen = generate(&DgpSpec::linear(8000, -0.04, 47)).unwrap();
    let filters: Vec<SubgroupFilter> = [
        ("x2-low", 0.0, 0.5),
        ("x2-high", 0.5, 1.0),
        ("x2-mid", 0.25, 0.75),
    ]
    .into_iter()
    .map(|(name, lo, hi)| SubgroupFilter {
        name: name.into(),
        predicate: FilterPredicate::Range {
            column: "x2".into(),
            lo,
            hi,
        },
    })
    .collect();
    let grid = subgroup_run(&gen.data, &filters, &lean_config(51)).unwrap();
    let ests: Vec<(f64, f64)> = grid
        .results
        .iter()
        .map(|r| {
            let e = r.estimate.as_ref().expect("feasible subgroup");
            (e.atet, e.se)
        })
        .collect();
    for i in 0..ests.len() {
        for j in i + 1..ests.len() {
            let pooled = (ests[i].1 * ests[i].1 + ests[j].1 * ests[j].1).sqrt();
            assert!(
                (ests[i].0 - ests[j].0).abs() <= 3.0 * pooled,
                "subgroups {i},{j}: {} vs {} (pooled se {pooled})",
                ests[i].0,
                ests[j].0
            );
        }
    }
}

/// The estimator is a pure function of (data, config): same seed twice gives
/// bit-identical results, and serialization of the record is stable.
#[test]
fn estimator_determinism_end_to_end() {
    let gen = generate(&DgpSpec::linear(1500, -0.03, 31)).unwrap();
    let cfg = lean_config(41);
    let a = estimate_atet(&gen.data, &cfg).unwrap();
    let b = estimate_atet(&gen.data, &cfg).unwrap();
    assert_eq!(a.atet.to_bits(), b.atet.to_bits());
    assert_eq!(a.se.to_bits(), b.se.to_bits());
    assert_eq!(a.influence, b.influence);

    let rec_a = diddml::report::EstimateRecord::from_diddml("x", &a, &cfg);
    let rec_b = diddml::report::EstimateRecord::from_diddml("x", &b, &cfg);
    assert_eq!(rec_a.to_json_pretty(), rec_b.to_json_pretty());
}

/// Persisting a dataset to CSV and reloading preserves everything the
/// estimator consumes.
#[test]
fn csv_round_trip_preserves_dataset() {
    let gen = generate(&DgpSpec::linear(800, -0.05, 37)).unwrap();
    let mut buf = Vec::new();
    gen.data.write_csv(&mut buf).unwrap();
    let roles = ColumnRoles::new("y", "cluster")
        .treatment("d")
        .period("t")
        .continuous(&["x1", "x2"])
        .categorical(&["grp"]);
    let (reloaded, _) = load_csv_from_reader(buf.as_slice(), &roles).unwrap();
    assert_eq!(reloaded.n(), gen.data.n());
    assert_eq!(reloaded.y(), gen.data.y());
    assert_eq!(reloaded.d(), gen.data.d());
    assert_eq!(reloaded.t(), gen.data.t());
    for name in ["x1", "x2"] {
        let before = match gen.data.column(name).unwrap() {
            RawColumn::Continuous { values, .. } => values.clone(),
            _ => unreachable!(),
        };
        let after = match reloaded.column(name).unwrap() {
            RawColumn::Continuous { values, .. } => values.clone(),
            _ => unreachable!(),
        };
        assert_eq!(before, after, "column {name}");
    }
    // Estimates agree bit for bit on the reloaded data.
    let cfg = lean_config(43);
    let a = estimate_atet(&gen.data, &cfg).unwrap();
    let b = estimate_atet(&reloaded, &cfg).unwrap();
    assert_eq!(a.atet.to_bits(), b.atet.to_bits());
}

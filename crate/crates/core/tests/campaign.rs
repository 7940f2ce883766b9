//! End-to-end simulation and analysis runs.

use std::fs;

use sigtrial_core::campaign::{
    analyze_dataset, export_simulated, opchar_csv, run_analysis, run_simulation, scores_csv,
    to_json, write_analysis, write_simulation,
};
use sigtrial_core::config::{bundled, MethodChoice, RunConfig};
use sigtrial_core::dataio::{parse_trial_csv, write_trial_csv, IngestSummary};
use sigtrial_core::simengine::simulate_dataset;
use sigtrial_core::statnum::RngStream;

fn small_simulation(name: &str) -> RunConfig {
    let mut c = RunConfig::from_json(bundled(name).unwrap()).unwrap();
    let s = c.scenario.as_mut().unwrap();
    s.n_subjects = 150;
    s.n_covariates = 12;
    s.k_sens1 = 4;
    s.k_sens2 = 4;
    s.n_overlap = 2;
    c.n_replications = 4;
    c.r_folds = 5;
    c
}

fn analysis_config(k: usize, method: MethodChoice) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{"k_clusters": {k}, "r_folds": 5, "n_permutations": 9, "seed": 17, "method": "{}"}}"#,
        match method {
            MethodChoice::Cvrs2 => "cvrs2",
            MethodChoice::CvrsMarginal => "cvrs_marginal",
            MethodChoice::Both => "both",
        }
    ))
    .unwrap()
}

#[test]
fn simulation_reports_do_not_depend_on_thread_count() {
    for name in ["scenario1_20pct", "scenario2a"] {
        let mut config = small_simulation(name);
        config.method = MethodChoice::Both;
        config.threads = Some(1);
        let one = run_simulation(&config, 2).unwrap();
        config.threads = Some(3);
        let three = run_simulation(&config, 2).unwrap();
        assert_eq!(
            to_json(&one.report).unwrap(),
            to_json(&three.report).unwrap()
        );
        assert_eq!(opchar_csv(&one.report), opchar_csv(&three.report));
        assert_eq!(scores_csv(&one.dumps), scores_csv(&three.dumps));
    }
}

#[test]
fn simulation_writes_report_files() {
    let config = small_simulation("scenario2a");
    let outcome = run_simulation(&config, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_simulation(&outcome, dir.path()).unwrap();
    let json = fs::read_to_string(dir.path().join("opchar.json")).unwrap();
    let echoed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(echoed["seed"], 42);
    let rerun = RunConfig::from_json(&echoed["config"].to_string()).unwrap();
    assert_eq!(rerun, config.echo());
    let csv = fs::read_to_string(dir.path().join("opchar.csv")).unwrap();
    assert!(
        csv.starts_with("method,characteristic,cluster_1,cluster_2,cluster_3,cluster_4"),
        "{csv}"
    );
    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 150);
}

#[test]
fn exported_csv_analysis_matches_in_memory_analysis() {
    let sim = small_simulation("scenario1_20pct");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trial.csv");
    export_simulated(&sim, 2, fs::File::create(&path).unwrap()).unwrap();

    let config = analysis_config(4, MethodChoice::Both);
    let (from_csv, report) = run_analysis(&config, &path).unwrap();
    let (direct, _) = simulate_dataset(
        sim.scenario.as_ref().unwrap(),
        RngStream::new(sim.seed, 2).substream(0),
    )
    .unwrap();
    assert_eq!(from_csv, direct);
    let in_memory = analyze_dataset(&config, &direct, report.data).unwrap();
    for (a, b) in report.methods.iter().zip(&in_memory.methods) {
        assert_eq!(
            a.run.as_ref().unwrap().assignment,
            b.run.as_ref().unwrap().assignment
        );
        assert_eq!(a.permutation, b.permutation);
    }

    let out = dir.path().join("out");
    write_analysis(&from_csv, &report, &out).unwrap();
    for sub in ["cvrs2", "cvrs_marginal"] {
        for file in [
            "assignments.csv",
            "cluster_rates.csv",
            "coefficients.csv",
            "permutation.csv",
        ] {
            assert!(out.join(sub).join(file).is_file(), "{sub}/{file}");
        }
    }
    assert!(out.join("analysis.json").is_file());
}

#[test]
fn incomplete_rows_are_dropped_before_analysis() {
    let sim = small_simulation("scenario1_20pct");
    let (ds, _) = simulate_dataset(sim.scenario.as_ref().unwrap(), RngStream::new(5, 0)).unwrap();
    let mut buf = Vec::new();
    write_trial_csv(&ds, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // y2 missing in 45 of the 150 rows, as NA or blank.
    for (i, line) in lines.iter_mut().enumerate().skip(1) {
        let marker = match i % 10 {
            1 | 2 => "NA",
            3 => "",
            _ => continue,
        };
        let mut fields: Vec<&str> = line.split(',').collect();
        fields[3] = marker;
        *line = fields.join(",");
    }
    let (complete, summary) = parse_trial_csv(lines.join("\n").as_bytes(), "test").unwrap();
    assert_eq!(summary.n_rows, 150);
    assert_eq!(summary.n_dropped, 45);
    assert_eq!(summary.n_analyzed, 105);
    let report =
        analyze_dataset(&analysis_config(2, MethodChoice::Cvrs2), &complete, summary).unwrap();
    assert_eq!(
        report.methods[0]
            .clusters
            .iter()
            .map(|c| c.size)
            .sum::<usize>(),
        105
    );
}

#[test]
fn constant_covariate_gets_zero_coefficients() {
    let sim = small_simulation("scenario2a");
    let (mut ds, _) =
        simulate_dataset(sim.scenario.as_ref().unwrap(), RngStream::new(6, 0)).unwrap();
    ds.covariates[3] = vec![1.5; ds.n()];
    let report = analyze_dataset(
        &analysis_config(4, MethodChoice::Both),
        &ds,
        IngestSummary {
            n_rows: 150,
            n_dropped: 0,
            n_analyzed: 150,
        },
    )
    .unwrap();
    for m in &report.methods {
        assert_eq!(m.run.as_ref().unwrap().mean_coefficients[3], (0.0, 0.0));
    }
}

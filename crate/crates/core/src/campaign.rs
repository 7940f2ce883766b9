//! Simulation campaigns and real-data analyses, with their report files.
//!
//! Replication `r` of a campaign draws everything from stream `(seed, r)`:
//! substream 0 simulates the data, substreams 1 and 2 drive folds and
//! clustering. Results are gathered in replication order, so reports do not
//! depend on the number of worker threads.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::dataio::{read_trial_csv, IngestSummary};
use crate::error::{Error, Result};
use crate::inference::{
    overall_power_formula, run_permutation_test, sensitive_group_test, trial_population_test,
    PermutationReport, PermutationSettings, TestOutcome,
};
use crate::opchar::{aggregate, estimated_rates, OperatingCharacteristics, ReplicationResult};
use crate::scores::{run_method, Method, MethodRun, TrialDataset};
use crate::simengine::{simulate_dataset, GroundTruth};
use crate::statnum::RngStream;

/// Runs `f` on a pool with `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| {
                    Error::InvalidInput(format!("cannot start {n} worker threads: {e}"))
                })?;
            Ok(pool.install(f))
        }
    }
}

/// One simulated replication under one method.
pub fn replication_result(
    dataset: &TrialDataset,
    truth: &GroundTruth,
    run: &MethodRun,
    replication: u64,
    tp_p: [f64; 2],
) -> Result<ReplicationResult> {
    let k = run.assignment.k;
    let mut sens_p = Vec::with_capacity(k);
    for c in 1..=k {
        sens_p.push([
            sensitive_group_test(dataset, &run.assignment, c, 1)?.p_value,
            sensitive_group_test(dataset, &run.assignment, c, 2)?.p_value,
        ]);
    }
    Ok(ReplicationResult {
        replication,
        tp_p,
        sens_p,
        assignment: run.assignment.clone(),
        truth: truth.clone(),
        est_rates: estimated_rates(dataset, &run.assignment)?,
    })
}

/// Per-subject scores of one replication, kept for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDump {
    pub replication: u64,
    pub dataset: TrialDataset,
    pub truth: GroundTruth,
    pub runs: Vec<MethodRun>,
}

struct Replicate {
    results: Vec<ReplicationResult>,
    dump: Option<ScoreDump>,
}

fn simulate_replication(
    config: &RunConfig,
    methods: &[Method],
    r: u64,
    keep_scores: bool,
) -> Result<Replicate> {
    let scenario = config
        .scenario
        .as_ref()
        .expect("validated simulation config");
    let stream = RngStream::new(config.seed, r);
    let (dataset, truth) = simulate_dataset(scenario, stream.substream(0))?;
    let tp_p = [1, 2].map(|o| {
        trial_population_test(&dataset, o, config.continuity_correction)
            .map_or(1.0, |t: TestOutcome| t.p_value)
    });
    let mut results = Vec::with_capacity(methods.len());
    let mut runs = Vec::new();
    for &m in methods {
        let run = run_method(&dataset, m, config.k_clusters, config.r_folds, stream)?;
        results.push(replication_result(&dataset, &truth, &run, r, tp_p)?);
        if keep_scores {
            runs.push(run);
        }
    }
    Ok(Replicate {
        results,
        dump: keep_scores.then_some(ScoreDump {
            replication: r,
            dataset,
            truth,
            runs,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCharacteristics {
    pub method: Method,
    pub operating_characteristics: OperatingCharacteristics,
    /// `p_tp + (1 − p_tp)·p_sens` per cluster and outcome, for comparison
    /// with the empirical union.
    pub power_overall_formula: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub config: RunConfig,
    pub gammas: [f64; 2],
    pub methods: Vec<MethodCharacteristics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub report: SimulationReport,
    /// Raw replication results per method, in replication order.
    pub replications: Vec<Vec<ReplicationResult>>,
    pub dumps: Vec<ScoreDump>,
}

/// Runs a full simulation campaign. Scores of the first `dump_scores`
/// replications are kept.
pub fn run_simulation(config: &RunConfig, dump_scores: usize) -> Result<SimulationOutcome> {
    config.validate(Mode::Simulate)?;
    let scenario = config.scenario.as_ref().expect("validated");
    let methods = config.method.methods();
    info!(
        "simulating {} replications of {} (n = {}, k = {})",
        config.n_replications, scenario.name, scenario.n_subjects, config.k_clusters
    );
    let reps: Vec<Replicate> = with_threads(config.threads, || {
        (0..config.n_replications as u64)
            .into_par_iter()
            .map(|r| simulate_replication(config, &methods, r, (r as usize) < dump_scores))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut replications: Vec<Vec<ReplicationResult>> =
        vec![Vec::with_capacity(reps.len()); methods.len()];
    let mut dumps = Vec::new();
    for rep in reps {
        for (slot, res) in replications.iter_mut().zip(rep.results) {
            slot.push(res);
        }
        dumps.extend(rep.dump);
    }
    let mut summaries = Vec::with_capacity(methods.len());
    for (&method, results) in methods.iter().zip(&replications) {
        let oc = aggregate(results, config.alphas)?;
        let power_overall_formula = oc
            .clusters
            .iter()
            .map(|c| {
                let f =
                    |o: usize| overall_power_formula(oc.power_tp[o].value, c.power_sens[o].value);
                Ok([f(0)?, f(1)?])
            })
            .collect::<Result<Vec<_>>>()?;
        summaries.push(MethodCharacteristics {
            method,
            operating_characteristics: oc,
            power_overall_formula,
        });
    }
    let (g1, g2) = scenario.gammas()?;
    Ok(SimulationOutcome {
        report: SimulationReport {
            seed: config.seed,
            config: config.echo(),
            gammas: [g1, g2],
            methods: summaries,
        },
        replications,
        dumps,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// JSON report text; ends with a newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Operating characteristics in table form: one row per characteristic,
/// one column per cluster.
pub fn opchar_csv(report: &SimulationReport) -> String {
    let k = report.config.k_clusters;
    let mut out = String::from("method,characteristic");
    for c in 1..=k {
        out.push_str(&format!(",cluster_{c}"));
    }
    out.push('\n');
    for m in &report.methods {
        let oc = &m.operating_characteristics;
        let mut row = |name: &str, f: &dyn Fn(usize) -> Option<f64>| {
            out.push_str(m.method.name());
            out.push(',');
            out.push_str(name);
            for c in 1..=k {
                out.push(',');
                out.push_str(&fmt_opt(f(c)));
            }
            out.push('\n');
        };
        for o in 0..2 {
            row(&format!("power_trial_population_y{}", o + 1), &|_| {
                Some(oc.power_tp[o].value)
            });
        }
        for o in 0..2 {
            row(&format!("power_sensitive_group_y{}", o + 1), &|c| {
                Some(oc.cluster(c).power_sens[o].value)
            });
        }
        for o in 0..2 {
            row(&format!("power_overall_y{}", o + 1), &|c| {
                Some(oc.cluster(c).power_overall[o].value)
            });
        }
        row("sensitivity", &|c| {
            oc.cluster(c).sensitivity.map(|e| e.value)
        });
        row("specificity", &|c| {
            oc.cluster(c).specificity.map(|e| e.value)
        });
        for o in 0..2 {
            row(&format!("estimated_rate_y{}", o + 1), &|c| {
                oc.cluster(c).est_rate[o].map(|e| e.value)
            });
        }
        row("mean_cluster_size", &|c| Some(oc.cluster(c).mean_size));
    }
    out
}

/// Per-subject scores of the dumped replications.
pub fn scores_csv(dumps: &[ScoreDump]) -> String {
    let mut out = String::from("replication,method,id,arm,y1,y2,true_cluster,rs1,rs2,cluster\n");
    for d in dumps {
        for run in &d.runs {
            for i in 0..d.dataset.n() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    d.replication,
                    run.method.name(),
                    d.dataset.ids[i],
                    d.dataset.arm[i],
                    d.dataset.y1[i],
                    d.dataset.y2[i],
                    d.truth.true_cluster[i],
                    run.scores[i].rs1,
                    run.scores[i].rs2,
                    run.assignment.cluster_of[i]
                ));
            }
        }
    }
    out
}

/// Writes `opchar.json`, `opchar.csv` and, with dumps, `scores.csv`.
pub fn write_simulation(outcome: &SimulationOutcome, outdir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(outdir)?;
    let mut written = vec![outdir.join("opchar.json"), outdir.join("opchar.csv")];
    write_file(&written[0], to_json(&outcome.report)?.as_bytes())?;
    write_file(&written[1], opchar_csv(&outcome.report).as_bytes())?;
    if !outcome.dumps.is_empty() {
        let p = outdir.join("scores.csv");
        write_file(&p, scores_csv(&outcome.dumps).as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

/// Arm-wise response rates within one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRates {
    pub n: usize,
    pub rate_y1: Option<f64>,
    pub rate_y2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub control: ArmRates,
    pub treated: ArmRates,
    /// Fisher's exact test per outcome.
    pub sensitive_group_tests: [TestOutcome; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAnalysis {
    pub method: Method,
    pub k: usize,
    pub clusters: Vec<ClusterSummary>,
    pub permutation: PermutationReport,
    #[serde(skip)]
    pub run: Option<MethodRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub seed: u64,
    pub config: RunConfig,
    pub data: IngestSummary,
    pub trial_population_tests: [TestOutcome; 2],
    pub methods: Vec<MethodAnalysis>,
}

fn arm_rates(dataset: &TrialDataset, members: &[usize], arm: u8) -> ArmRates {
    let idx: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| dataset.arm[i] == arm)
        .collect();
    let rate = |y: &[u8]| {
        (!idx.is_empty())
            .then(|| idx.iter().map(|&i| f64::from(y[i])).sum::<f64>() / idx.len() as f64)
    };
    ArmRates {
        n: idx.len(),
        rate_y1: rate(&dataset.y1),
        rate_y2: rate(&dataset.y2),
    }
}

/// Analyses one dataset: risk scores, clusters, cluster-wise tests and
/// permutation p-values (the sensitive cluster for `k = 2`, every cluster
/// for `k = 4`). The reported analysis uses stream `(seed, 0)`.
pub fn analyze_dataset(
    config: &RunConfig,
    dataset: &TrialDataset,
    data: IngestSummary,
) -> Result<AnalysisReport> {
    config.validate(Mode::Analyze)?;
    let k = config.k_clusters;
    let tests = [1, 2].map(|o| trial_population_test(dataset, o, config.continuity_correction));
    let [t1, t2] = tests;
    let trial_population_tests = [t1?, t2?];
    let clusters_tested: Vec<usize> = if k == 2 { vec![2] } else { (1..=k).collect() };
    let mut methods = Vec::new();
    for method in config.method.methods() {
        info!(
            "running {} with k = {k} on {} subjects",
            method.name(),
            dataset.n()
        );
        let run = run_method(
            dataset,
            method,
            k,
            config.r_folds,
            RngStream::new(config.seed, 0),
        )?;
        let mut clusters = Vec::with_capacity(k);
        for c in 1..=k {
            let members: Vec<usize> = run.assignment.members(c).collect();
            clusters.push(ClusterSummary {
                cluster: c,
                size: members.len(),
                control: arm_rates(dataset, &members, 0),
                treated: arm_rates(dataset, &members, 1),
                sensitive_group_tests: [
                    sensitive_group_test(dataset, &run.assignment, c, 1)?,
                    sensitive_group_test(dataset, &run.assignment, c, 2)?,
                ],
            });
        }
        info!(
            "{} permutations for {}",
            config.n_permutations,
            method.name()
        );
        let settings = PermutationSettings {
            method,
            k,
            r_folds: config.r_folds,
            n_permutations: config.n_permutations,
        };
        let permutation = with_threads(config.threads, || {
            run_permutation_test(dataset, &settings, &clusters_tested, config.seed)
        })??;
        methods.push(MethodAnalysis {
            method,
            k,
            clusters,
            permutation,
            run: Some(run),
        });
    }
    Ok(AnalysisReport {
        seed: config.seed,
        config: config.echo(),
        data,
        trial_population_tests,
        methods,
    })
}

/// Reads `data_csv` and analyses it.
pub fn run_analysis(config: &RunConfig, data_csv: &Path) -> Result<(TrialDataset, AnalysisReport)> {
    config.validate(Mode::Analyze)?;
    let (dataset, summary) = read_trial_csv(data_csv)?;
    info!(
        "read {} rows from {}, dropped {} incomplete, analysing {}",
        summary.n_rows,
        data_csv.display(),
        summary.n_dropped,
        summary.n_analyzed
    );
    let mut config = config.clone();
    config.data_path = Some(data_csv.to_path_buf());
    let report = analyze_dataset(&config, &dataset, summary)?;
    Ok((dataset, report))
}

pub fn assignments_csv(dataset: &TrialDataset, run: &MethodRun) -> String {
    let mut out = String::from("id,rs1,rs2,cluster\n");
    for i in 0..dataset.n() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            dataset.ids[i], run.scores[i].rs1, run.scores[i].rs2, run.assignment.cluster_of[i]
        ));
    }
    out
}

pub fn cluster_rates_csv(analysis: &MethodAnalysis) -> String {
    let mut out = String::from("cluster,arm,n,rate_y1,rate_y2\n");
    for c in &analysis.clusters {
        for (arm, r) in [("control", &c.control), ("treatment", &c.treated)] {
            out.push_str(&format!(
                "{},{arm},{},{},{}\n",
                c.cluster,
                r.n,
                fmt_opt(r.rate_y1),
                fmt_opt(r.rate_y2)
            ));
        }
    }
    out
}

pub fn coefficients_csv(dataset: &TrialDataset, run: &MethodRun) -> String {
    let mut out = String::from("covariate,beta1,beta2\n");
    for (name, (b1, b2)) in dataset.covariate_names.iter().zip(&run.mean_coefficients) {
        out.push_str(&format!("{name},{b1},{b2}\n"));
    }
    out
}

pub fn permutation_csv(analysis: &MethodAnalysis) -> String {
    let mut out = String::from("cluster,outcome,observed_p,permutation_p,n_permutations\n");
    for c in &analysis.permutation.clusters {
        for o in 0..2 {
            out.push_str(&format!(
                "{},y{},{},{},{}\n",
                c.cluster,
                o + 1,
                c.observed_p[o],
                c.permutation_p[o],
                analysis.permutation.n_permutations
            ));
        }
    }
    out
}

/// Writes `analysis.json` plus per-method CSV tables. With one method the
/// tables go to `outdir`, with both to `outdir/<method>/`.
pub fn write_analysis(
    dataset: &TrialDataset,
    report: &AnalysisReport,
    outdir: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(outdir)?;
    let mut written = vec![outdir.join("analysis.json")];
    write_file(&written[0], to_json(report)?.as_bytes())?;
    let nested = report.methods.len() > 1;
    for m in &report.methods {
        let run = m
            .run
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("analysis report carries no scores".into()))?;
        let dir = if nested {
            outdir.join(m.method.name())
        } else {
            outdir.to_path_buf()
        };
        create_dir(&dir)?;
        for (name, text) in [
            ("assignments.csv", assignments_csv(dataset, run)),
            ("cluster_rates.csv", cluster_rates_csv(m)),
            ("coefficients.csv", coefficients_csv(dataset, run)),
            ("permutation.csv", permutation_csv(m)),
        ] {
            let p = dir.join(name);
            write_file(&p, text.as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Writes one simulated dataset of a scenario config (replication `r`).
pub fn export_simulated<W: Write>(config: &RunConfig, replication: u64, writer: W) -> Result<()> {
    config.validate(Mode::Simulate)?;
    let scenario = config.scenario.as_ref().expect("validated");
    let (dataset, _) = simulate_dataset(
        scenario,
        RngStream::new(config.seed, replication).substream(0),
    )?;
    crate::dataio::write_trial_csv(&dataset, writer)
}

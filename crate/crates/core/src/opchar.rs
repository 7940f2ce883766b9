//! Replication-level aggregation into operating characteristics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::AlphaSplit;
use crate::scores::{ClusterAssignment, TrialDataset};
use crate::simengine::GroundTruth;

/// Everything one replication contributes to the operating characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: u64,
    /// Trial-population p-value per outcome.
    pub tp_p: [f64; 2],
    /// `sens_p[c - 1][o]`: Fisher p-value of cluster `c`, outcome `o + 1`.
    pub sens_p: Vec<[f64; 2]>,
    pub assignment: ClusterAssignment,
    pub truth: GroundTruth,
    /// `est_rates[c - 1][o]`: treated response rate, `None` without treated subjects.
    pub est_rates: Vec<[Option<f64>; 2]>,
}

/// Maps the simulation quadrant onto the cluster labels of a `k`-cluster run.
///
/// With four clusters the labels coincide. With two, only subjects sensitive
/// to both outcomes count as sensitive.
pub fn truth_labels(truth: &GroundTruth, k: usize) -> Result<Vec<usize>> {
    match k {
        4 => Ok(truth.true_cluster.clone()),
        2 => Ok(truth
            .true_cluster
            .iter()
            .map(|&c| if c == 4 { 2 } else { 1 })
            .collect()),
        _ => Err(Error::InvalidInput(format!("k must be 2 or 4, got {k}"))),
    }
}

/// Sensitivity and specificity of selecting `cluster`; `None` when the
/// conditioning truth class is empty.
pub fn classification_metrics(
    truth: &GroundTruth,
    assignment: &ClusterAssignment,
    cluster: usize,
) -> Result<(Option<f64>, Option<f64>)> {
    if truth.n() != assignment.cluster_of.len() {
        return Err(Error::LengthMismatch(
            truth.n(),
            assignment.cluster_of.len(),
        ));
    }
    let labels = truth_labels(truth, assignment.k)?;
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in labels.iter().zip(&assignment.cluster_of) {
        if t == cluster {
            pos += 1;
            tp += usize::from(p == cluster);
        } else {
            neg += 1;
            tn += usize::from(p != cluster);
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok((ratio(tp, pos), ratio(tn, neg)))
}

/// Treated-arm response rate per cluster and outcome.
pub fn estimated_rates(
    dataset: &TrialDataset,
    assignment: &ClusterAssignment,
) -> Result<Vec<[Option<f64>; 2]>> {
    if dataset.n() != assignment.cluster_of.len() {
        return Err(Error::LengthMismatch(
            dataset.n(),
            assignment.cluster_of.len(),
        ));
    }
    let mut counts = vec![(0u64, 0u64, 0u64); assignment.k];
    for i in 0..dataset.n() {
        if dataset.arm[i] == 1 {
            let c = &mut counts[assignment.cluster_of[i] - 1];
            c.0 += 1;
            c.1 += u64::from(dataset.y1[i]);
            c.2 += u64::from(dataset.y2[i]);
        }
    }
    Ok(counts
        .into_iter()
        .map(|(n, r1, r2)| {
            if n == 0 {
                [None, None]
            } else {
                [Some(r1 as f64 / n as f64), Some(r2 as f64 / n as f64)]
            }
        })
        .collect())
}

/// A proportion estimated from replications, with its Monte Carlo SE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub mc_se: f64,
    /// Replications that contributed.
    pub n: usize,
}

impl Estimate {
    fn from_count(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            value: p,
            mc_se: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    /// Mean of the present values; `None` when nothing is present.
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Some(Self {
            value: mean,
            mc_se: (var / n as f64).sqrt(),
            n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCharacteristics {
    pub cluster: usize,
    /// Sensitive-group power per outcome.
    pub power_sens: [Estimate; 2],
    /// Fraction of replications where the trial-population test or this
    /// cluster's test rejects, per outcome.
    pub power_overall: [Estimate; 2],
    pub sensitivity: Option<Estimate>,
    pub specificity: Option<Estimate>,
    pub est_rate: [Option<Estimate>; 2],
    pub mean_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub n_replications: usize,
    pub k: usize,
    pub alphas: AlphaSplit,
    pub power_tp: [Estimate; 2],
    /// Fraction of replications where the trial-population test or any
    /// cluster's test rejects, per outcome.
    pub power_any: [Estimate; 2],
    pub clusters: Vec<ClusterCharacteristics>,
}

impl OperatingCharacteristics {
    pub fn cluster(&self, cluster: usize) -> &ClusterCharacteristics {
        &self.clusters[cluster - 1]
    }
}

/// Aggregates replications with integer rejection counts; averaged quantities
/// are summed in replication order, so the result does not depend on the
/// order of `results`.
pub fn aggregate(
    results: &[ReplicationResult],
    alphas: AlphaSplit,
) -> Result<OperatingCharacteristics> {
    let first = results.first().ok_or(Error::Empty)?;
    let k = first.assignment.k;
    let r = results.len();
    let mut sorted: Vec<&ReplicationResult> = results.iter().collect();
    sorted.sort_by_key(|x| x.replication);
    for x in &sorted {
        if x.assignment.k != k || x.sens_p.len() != k || x.est_rates.len() != k {
            return Err(Error::InvalidInput(
                "replications disagree on the number of clusters".into(),
            ));
        }
        let bad = |p: f64| !(0.0..=1.0).contains(&p);
        if x.tp_p.iter().copied().any(bad) || x.sens_p.iter().flatten().copied().any(bad) {
            return Err(Error::InvalidInput(format!(
                "replication {} has a p-value outside [0, 1]",
                x.replication
            )));
        }
    }

    let tp_rej = |x: &ReplicationResult, o: usize| x.tp_p[o] <= alphas.alpha1;
    let sens_rej = |x: &ReplicationResult, c: usize, o: usize| x.sens_p[c][o] <= alphas.alpha2;
    let count = |f: &dyn Fn(&ReplicationResult) -> bool| sorted.iter().filter(|x| f(x)).count();

    let power_tp = [0, 1].map(|o| Estimate::from_count(count(&|x| tp_rej(x, o)), r));
    let power_any = [0, 1].map(|o| {
        Estimate::from_count(
            count(&|x| tp_rej(x, o) || (0..k).any(|c| sens_rej(x, c, o))),
            r,
        )
    });

    let mut clusters = Vec::with_capacity(k);
    for c in 0..k {
        let mut sens = Vec::new();
        let mut spec = Vec::new();
        let mut rates = [Vec::new(), Vec::new()];
        let mut size = 0usize;
        for x in &sorted {
            let (se, sp) = classification_metrics(&x.truth, &x.assignment, c + 1)?;
            sens.extend(se);
            spec.extend(sp);
            for (slot, rate) in rates.iter_mut().zip(x.est_rates[c]) {
                slot.extend(rate);
            }
            size += x
                .assignment
                .cluster_of
                .iter()
                .filter(|&&l| l == c + 1)
                .count();
        }
        clusters.push(ClusterCharacteristics {
            cluster: c + 1,
            power_sens: [0, 1].map(|o| Estimate::from_count(count(&|x| sens_rej(x, c, o)), r)),
            power_overall: [0, 1]
                .map(|o| Estimate::from_count(count(&|x| tp_rej(x, o) || sens_rej(x, c, o)), r)),
            sensitivity: Estimate::from_values(&sens),
            specificity: Estimate::from_values(&spec),
            est_rate: [
                Estimate::from_values(&rates[0]),
                Estimate::from_values(&rates[1]),
            ],
            mean_size: size as f64 / r as f64,
        });
    }
    Ok(OperatingCharacteristics {
        n_replications: r,
        k,
        alphas,
        power_tp,
        power_any,
        clusters,
    })
}

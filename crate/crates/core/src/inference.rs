//! Trial-population, sensitive-group and permutation tests.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::interaction_wald_p;
use crate::scores::{run_method, ClusterAssignment, Method, TrialDataset};
use crate::statnum::{fisher_exact, two_proportion_test_with, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub p_value: f64,
    pub statistic: f64,
    pub test_name: String,
    pub degenerate: bool,
}

impl TestOutcome {
    /// A test that could not be carried out: p = 1, statistic 0.
    pub fn degenerate(test_name: &str) -> Self {
        Self {
            p_value: 1.0,
            statistic: 0.0,
            test_name: test_name.to_string(),
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSplit {
    /// Level of the trial-population test.
    pub alpha1: f64,
    /// Level of the sensitive-group test.
    pub alpha2: f64,
}

impl Default for AlphaSplit {
    fn default() -> Self {
        Self {
            alpha1: 0.04,
            alpha2: 0.01,
        }
    }
}

impl AlphaSplit {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        let s = Self { alpha1, alpha2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| a > 0.0 && a < 1.0;
        if !ok(self.alpha1) || !ok(self.alpha2) || !ok(self.overall()) {
            return Err(Error::ConfigInvalid(format!(
                "alpha levels must lie in (0, 1) with a sum below 1, got {} and {}",
                self.alpha1, self.alpha2
            )));
        }
        Ok(())
    }

    pub fn overall(&self) -> f64 {
        self.alpha1 + self.alpha2
    }
}

fn arm_counts(arm: &[u8], y: &[u8], members: impl Iterator<Item = usize>) -> [[u64; 2]; 2] {
    // [[treated responders, treated non-responders], [control responders, control non-responders]]
    let mut table = [[0u64; 2]; 2];
    for i in members {
        let row = usize::from(arm[i] == 0);
        let col = usize::from(y[i] == 0);
        table[row][col] += 1;
    }
    table
}

/// Two-proportion comparison of the arms over the whole trial.
pub fn trial_population_test(
    dataset: &TrialDataset,
    outcome_index: usize,
    continuity_correction: bool,
) -> Result<TestOutcome> {
    let y = dataset.outcome(outcome_index)?;
    let t = arm_counts(&dataset.arm, y, 0..dataset.n());
    let name = "two_proportion_z";
    let (n1, n0) = (t[0][0] + t[0][1], t[1][0] + t[1][1]);
    if n1 == 0 || n0 == 0 {
        return Ok(TestOutcome::degenerate(name));
    }
    let r = two_proportion_test_with(t[0][0], n1, t[1][0], n0, continuity_correction)?;
    Ok(TestOutcome {
        p_value: r.p_value,
        statistic: r.statistic,
        test_name: name.to_string(),
        degenerate: r.degenerate,
    })
}

/// Fisher's exact arm comparison restricted to one cluster.
pub fn sensitive_group_test(
    dataset: &TrialDataset,
    assignment: &ClusterAssignment,
    cluster: usize,
    outcome_index: usize,
) -> Result<TestOutcome> {
    let y = dataset.outcome(outcome_index)?;
    if assignment.cluster_of.len() != dataset.n() {
        return Err(Error::LengthMismatch(
            dataset.n(),
            assignment.cluster_of.len(),
        ));
    }
    if cluster == 0 || cluster > assignment.k {
        return Err(Error::InvalidInput(format!(
            "cluster {cluster} outside 1..={}",
            assignment.k
        )));
    }
    let t = arm_counts(&dataset.arm, y, assignment.members(cluster));
    let name = "fisher_exact";
    if t[0][0] + t[0][1] == 0 || t[1][0] + t[1][1] == 0 {
        return Ok(TestOutcome::degenerate(name));
    }
    // Conditional odds-ratio estimate on the log scale as the statistic.
    let statistic = ((t[0][0] as f64 + 0.5) * (t[1][1] as f64 + 0.5)
        / ((t[0][1] as f64 + 0.5) * (t[1][0] as f64 + 0.5)))
        .ln();
    Ok(TestOutcome {
        p_value: fisher_exact(t),
        statistic,
        test_name: name.to_string(),
        degenerate: false,
    })
}

/// `(1 + #{p* ≤ p0}) / (1 + |p*|)`.
pub fn permutation_pvalue(p0: f64, p_star: &[f64]) -> Result<f64> {
    if p_star.is_empty() {
        return Err(Error::Empty);
    }
    let hits = p_star.iter().filter(|&&p| p <= p0).count();
    Ok((1 + hits) as f64 / (1 + p_star.len()) as f64)
}

/// Probability of a significant trial-population or sensitive-group result
/// when the two tests are independent.
pub fn overall_power_formula(p_tp: f64, p_sens: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_tp) || !(0.0..=1.0).contains(&p_sens) {
        return Err(Error::InvalidInput(format!(
            "powers must lie in [0, 1], got {p_tp} and {p_sens}"
        )));
    }
    Ok(p_tp + (1.0 - p_tp) * p_sens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSettings {
    pub method: Method,
    /// 2 or 4. Marginal runs with 4 use the intersection of the two splits.
    pub k: usize,
    pub r_folds: usize,
    pub n_permutations: usize,
}

/// Permutation p-values of one analysed cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPermutationResult {
    pub cluster: usize,
    /// Observed interaction p-value per outcome.
    pub observed_p: [f64; 2],
    pub permutation_p: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub n_permutations: usize,
    pub clusters: Vec<ClusterPermutationResult>,
}

impl PermutationReport {
    pub fn cluster(&self, cluster: usize) -> Option<&ClusterPermutationResult> {
        self.clusters.iter().find(|c| c.cluster == cluster)
    }
}

/// Full cross-validated clustering of one dataset under `settings`.
pub fn cluster_dataset(
    dataset: &TrialDataset,
    settings: &PermutationSettings,
    rng: RngStream,
) -> Result<ClusterAssignment> {
    Ok(run_method(dataset, settings.method, settings.k, settings.r_folds, rng)?.assignment)
}

fn interaction_ps(
    dataset: &TrialDataset,
    assignment: &ClusterAssignment,
    clusters: &[usize],
) -> Vec<[f64; 2]> {
    clusters
        .iter()
        .map(|&c| {
            let s = assignment.indicator(c);
            let p = |y: &[u8]| interaction_wald_p(&dataset.arm, &s, y).map_or(1.0, |t| t.p_value);
            [p(&dataset.y1), p(&dataset.y2)]
        })
        .collect()
}

/// Permutation test of the treatment × cluster-membership interaction.
///
/// The observed analysis uses stream `(seed, 0)` of `rng`'s seed; permutation
/// `q` uses stream `(seed, 1 + q)`, with substream 0 shuffling the arm labels.
/// Every permutation reruns folds, risk scores and clustering.
pub fn run_permutation_test(
    dataset: &TrialDataset,
    settings: &PermutationSettings,
    clusters: &[usize],
    seed: u64,
) -> Result<PermutationReport> {
    if settings.n_permutations == 0 {
        return Err(Error::InvalidInput(
            "n_permutations must be at least 1".into(),
        ));
    }
    if clusters.is_empty() || clusters.iter().any(|&c| c == 0 || c > settings.k) {
        return Err(Error::InvalidInput(format!(
            "clusters {clusters:?} must be a nonempty subset of 1..={}",
            settings.k
        )));
    }
    let observed = cluster_dataset(dataset, settings, RngStream::new(seed, 0))?;
    let p0 = interaction_ps(dataset, &observed, clusters);

    let p_star: Vec<Vec<[f64; 2]>> = (0..settings.n_permutations)
        .into_par_iter()
        .map(|q| {
            let stream = RngStream::new(seed, 1 + q as u64);
            let mut arm = dataset.arm.clone();
            arm.shuffle(&mut stream.substream(0).rng());
            let degenerate = vec![[1.0, 1.0]; clusters.len()];
            let Ok(permuted) = dataset.with_arm(arm) else {
                return degenerate;
            };
            match cluster_dataset(&permuted, settings, stream) {
                Ok(a) => interaction_ps(&permuted, &a, clusters),
                Err(_) => degenerate,
            }
        })
        .collect();

    let mut out = Vec::with_capacity(clusters.len());
    for (ci, &c) in clusters.iter().enumerate() {
        let mut permutation_p = [0.0; 2];
        for o in 0..2 {
            let column: Vec<f64> = p_star.iter().map(|row| row[ci][o]).collect();
            permutation_p[o] = permutation_pvalue(p0[ci][o], &column)?;
        }
        out.push(ClusterPermutationResult {
            cluster: c,
            observed_p: p0[ci],
            permutation_p,
        });
    }
    Ok(PermutationReport {
        n_permutations: settings.n_permutations,
        clusters: out,
    })
}

//! Cross-validated risk scores.
//!
//! For every fold the single-covariate interaction coefficients are estimated
//! on the training part, the held-out subjects are scored as coefficient-weighted
//! covariate sums, and the held-out scores are clustered. Memberships from all
//! folds are then pooled so every subject carries exactly one canonical label.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bivglm::{fit_bivariate_or, BivariateData};
use crate::clustering::{canonicalize, kmeans};
use crate::error::{Error, Result};
use crate::glm::fit_single_covariate_interaction;
use crate::statnum::RngStream;

/// Subjects × (arm, two binary outcomes, covariates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub ids: Vec<String>,
    /// 0 = control, 1 = treatment.
    pub arm: Vec<u8>,
    pub y1: Vec<u8>,
    pub y2: Vec<u8>,
    /// Column-major: `covariates[j][i]` is covariate `j` of subject `i`.
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
}

impl TrialDataset {
    /// Builds a dataset with ids `1..=n` and names `x1..=xJ`.
    pub fn new(arm: Vec<u8>, y1: Vec<u8>, y2: Vec<u8>, covariates: Vec<Vec<f64>>) -> Result<Self> {
        let n = arm.len();
        let names = (1..=covariates.len()).map(|j| format!("x{j}")).collect();
        let ids = (1..=n).map(|i| i.to_string()).collect();
        Self::with_labels(ids, arm, y1, y2, covariates, names)
    }

    pub fn with_labels(
        ids: Vec<String>,
        arm: Vec<u8>,
        y1: Vec<u8>,
        y2: Vec<u8>,
        covariates: Vec<Vec<f64>>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self {
            ids,
            arm,
            y1,
            y2,
            covariates,
            covariate_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.arm.len();
        for len in [self.ids.len(), self.y1.len(), self.y2.len()] {
            if len != n {
                return Err(Error::LengthMismatch(n, len));
            }
        }
        if self.covariate_names.len() != self.covariates.len() {
            return Err(Error::LengthMismatch(
                self.covariates.len(),
                self.covariate_names.len(),
            ));
        }
        for col in &self.covariates {
            if col.len() != n {
                return Err(Error::LengthMismatch(n, col.len()));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset("covariates must be finite".into()));
            }
        }
        if [&self.arm, &self.y1, &self.y2]
            .iter()
            .any(|c| c.iter().any(|&v| v > 1))
        {
            return Err(Error::InvalidDataset("arm and outcomes must be 0/1".into()));
        }
        if !self.arm.contains(&0) || !self.arm.contains(&1) {
            return Err(Error::InvalidDataset("both arms must be nonempty".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.arm.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    /// Outcome column, `outcome_index ∈ {1, 2}`.
    pub fn outcome(&self, outcome_index: usize) -> Result<&[u8]> {
        match outcome_index {
            1 => Ok(&self.y1),
            2 => Ok(&self.y2),
            o => Err(Error::InvalidInput(format!(
                "outcome index must be 1 or 2, got {o}"
            ))),
        }
    }

    /// Copy with the treatment labels replaced.
    pub fn with_arm(&self, arm: Vec<u8>) -> Result<Self> {
        let mut ds = self.clone();
        ds.arm = arm;
        ds.validate()?;
        Ok(ds)
    }
}

/// Subject → fold map for r-fold cross-validation (folds are 0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_of: Vec<usize>,
    pub r: usize,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.r];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

/// Uniformly random balanced partition of `n` subjects into `r` folds.
pub fn make_folds(n: usize, r: usize, rng: RngStream) -> Result<FoldPlan> {
    if r < 2 || n < r {
        return Err(Error::InvalidFoldCount { n, r });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.rng());
    let mut fold_of = vec![0; n];
    for (pos, &subject) in order.iter().enumerate() {
        fold_of[subject] = pos % r;
    }
    Ok(FoldPlan { fold_of, r })
}

/// Canonical cluster label (1-based) per subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub cluster_of: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.cluster_of
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }

    pub fn indicator(&self, cluster: usize) -> Vec<u8> {
        self.cluster_of
            .iter()
            .map(|&c| u8::from(c == cluster))
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.cluster_of {
            c[l - 1] += 1;
        }
        c
    }
}

/// Bivariate risk score of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskScorePair {
    pub rs1: f64,
    pub rs2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cvrs2Output {
    pub scores: Vec<RiskScorePair>,
    pub assignment: ClusterAssignment,
    /// `coefficients[fold][j] = (β̂₁, β̂₂)` from the training part of `fold`.
    pub coefficients: Vec<Vec<(f64, f64)>>,
}

impl Cvrs2Output {
    /// Per-covariate coefficients averaged over folds.
    pub fn mean_coefficients(&self) -> Vec<(f64, f64)> {
        mean_pairs(&self.coefficients)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalOutput {
    pub scores: Vec<f64>,
    pub assignment: ClusterAssignment,
    /// `coefficients[fold][j] = β̂ⱼ` from the training part of `fold`.
    pub coefficients: Vec<Vec<f64>>,
}

impl MarginalOutput {
    pub fn mean_coefficients(&self) -> Vec<f64> {
        let r = self.coefficients.len() as f64;
        let j = self.coefficients.first().map_or(0, Vec::len);
        (0..j)
            .map(|c| self.coefficients.iter().map(|f| f[c]).sum::<f64>() / r)
            .collect()
    }
}

fn mean_pairs(per_fold: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let r = per_fold.len() as f64;
    let j = per_fold.first().map_or(0, Vec::len);
    (0..j)
        .map(|c| {
            let (a, b) = per_fold
                .iter()
                .fold((0.0, 0.0), |(a, b), f| (a + f[c].0, b + f[c].1));
            (a / r, b / r)
        })
        .collect()
}

fn check_plan(dataset: &TrialDataset, folds: &FoldPlan, k: usize) -> Result<()> {
    dataset.validate()?;
    if folds.fold_of.len() != dataset.n() {
        return Err(Error::LengthMismatch(dataset.n(), folds.fold_of.len()));
    }
    if let Some(&small) = folds.sizes().iter().min() {
        if small < k {
            return Err(Error::InvalidInput(format!(
                "every test fold needs at least k = {k} subjects, smallest has {small}"
            )));
        }
    }
    Ok(())
}

fn gather<T: Copy>(values: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| values[i]).collect()
}

/// Clusters the test-fold points and writes canonical labels into `out`.
fn cluster_fold(
    points: &[Vec<f64>],
    k: usize,
    rng: RngStream,
    test: &[usize],
    out: &mut [usize],
) -> Result<()> {
    let km = kmeans(points, k, rng)?;
    let labels = canonicalize(&km.centroids)?.apply(&km.assignment);
    for (&i, &l) in test.iter().zip(&labels) {
        out[i] = l;
    }
    Ok(())
}

/// Cross-validated bivariate risk scores and pooled cluster memberships.
///
/// Fold `l` is clustered with `rng.substream(l)`.
pub fn cvrs2(
    dataset: &TrialDataset,
    folds: &FoldPlan,
    k: usize,
    rng: RngStream,
) -> Result<Cvrs2Output> {
    if k != 2 && k != 4 {
        return Err(Error::InvalidInput(format!("k must be 2 or 4, got {k}")));
    }
    check_plan(dataset, folds, k)?;
    let n = dataset.n();
    let mut scores = vec![RiskScorePair { rs1: 0.0, rs2: 0.0 }; n];
    let mut cluster_of = vec![0; n];
    let mut coefficients = Vec::with_capacity(folds.r);

    for fold in 0..folds.r {
        let train = folds.train_indices(fold);
        let test = folds.test_indices(fold);
        let t = gather(&dataset.arm, &train);
        let y1 = gather(&dataset.y1, &train);
        let y2 = gather(&dataset.y2, &train);
        let mut betas = Vec::with_capacity(dataset.n_covariates());
        for column in &dataset.covariates {
            let x = gather(column, &train);
            let data = BivariateData::new(&x, &t, &y1, &y2)?;
            betas.push(fit_bivariate_or(&data)?.interactions());
        }
        let points: Vec<Vec<f64>> = test
            .iter()
            .map(|&i| {
                let (rs1, rs2) = dataset
                    .covariates
                    .iter()
                    .zip(&betas)
                    .fold((0.0, 0.0), |(a, b), (col, &(b1, b2))| {
                        (a + b1 * col[i], b + b2 * col[i])
                    });
                scores[i] = RiskScorePair { rs1, rs2 };
                vec![rs1, rs2]
            })
            .collect();
        cluster_fold(
            &points,
            k,
            rng.substream(fold as u64),
            &test,
            &mut cluster_of,
        )?;
        coefficients.push(betas);
    }
    Ok(Cvrs2Output {
        scores,
        assignment: ClusterAssignment { cluster_of, k },
        coefficients,
    })
}

/// Single-outcome cross-validated risk scores with a two-cluster split.
pub fn cvrs_marginal(
    dataset: &TrialDataset,
    outcome_index: usize,
    folds: &FoldPlan,
    rng: RngStream,
) -> Result<MarginalOutput> {
    let y = dataset.outcome(outcome_index)?;
    check_plan(dataset, folds, 2)?;
    let n = dataset.n();
    let mut scores = vec![0.0; n];
    let mut cluster_of = vec![0; n];
    let mut coefficients = Vec::with_capacity(folds.r);

    for fold in 0..folds.r {
        let train = folds.train_indices(fold);
        let test = folds.test_indices(fold);
        let t = gather(&dataset.arm, &train);
        let yt = gather(y, &train);
        let betas = dataset
            .covariates
            .iter()
            .map(|column| fit_single_covariate_interaction(&gather(column, &train), &t, &yt))
            .collect::<Result<Vec<f64>>>()?;
        let points: Vec<Vec<f64>> = test
            .iter()
            .map(|&i| {
                let s = dataset
                    .covariates
                    .iter()
                    .zip(&betas)
                    .map(|(col, b)| b * col[i])
                    .sum::<f64>();
                scores[i] = s;
                vec![s]
            })
            .collect();
        cluster_fold(
            &points,
            2,
            rng.substream(fold as u64),
            &test,
            &mut cluster_of,
        )?;
        coefficients.push(betas);
    }
    Ok(MarginalOutput {
        scores,
        assignment: ClusterAssignment { cluster_of, k: 2 },
        coefficients,
    })
}

/// Four groups from two marginal splits: (non, non) → 1, (non, sens) → 2,
/// (sens, non) → 3, (sens, sens) → 4.
pub fn combine_marginal(
    c1: &ClusterAssignment,
    c2: &ClusterAssignment,
) -> Result<ClusterAssignment> {
    if c1.k != 2 || c2.k != 2 {
        return Err(Error::InvalidInput(
            "marginal assignments must have k = 2".into(),
        ));
    }
    if c1.cluster_of.len() != c2.cluster_of.len() {
        return Err(Error::LengthMismatch(
            c1.cluster_of.len(),
            c2.cluster_of.len(),
        ));
    }
    let cluster_of = c1
        .cluster_of
        .iter()
        .zip(&c2.cluster_of)
        .map(|(&a, &b)| 1 + 2 * usize::from(a == 2) + usize::from(b == 2))
        .collect();
    Ok(ClusterAssignment { cluster_of, k: 4 })
}

/// Two groups from two marginal splits: sensitive (2) only when sensitive on both.
pub fn intersect_marginal(
    c1: &ClusterAssignment,
    c2: &ClusterAssignment,
) -> Result<ClusterAssignment> {
    let four = combine_marginal(c1, c2)?;
    Ok(ClusterAssignment {
        cluster_of: four
            .cluster_of
            .iter()
            .map(|&c| if c == 4 { 2 } else { 1 })
            .collect(),
        k: 2,
    })
}

/// Which risk-score construction to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cvrs2,
    CvrsMarginal,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cvrs2 => "cvrs2",
            Method::CvrsMarginal => "cvrs_marginal",
        }
    }
}

/// Scores, memberships and fold-averaged coefficients of one analysis.
///
/// For the marginal method `rs1`/`rs2` are the two single-outcome scores and
/// the coefficient pairs hold the two single-outcome estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub scores: Vec<RiskScorePair>,
    pub assignment: ClusterAssignment,
    pub mean_coefficients: Vec<(f64, f64)>,
}

/// Runs `method` with `k` clusters. Marginal runs with `k = 2` keep the
/// intersection of the two sensitive groups; with `k = 4` all four
/// combinations.
///
/// Substream 1 of `rng` draws the folds, substream 2 seeds the clustering.
pub fn run_method(
    dataset: &TrialDataset,
    method: Method,
    k: usize,
    r_folds: usize,
    rng: RngStream,
) -> Result<MethodRun> {
    if k != 2 && k != 4 {
        return Err(Error::InvalidInput(format!("k must be 2 or 4, got {k}")));
    }
    let folds = make_folds(dataset.n(), r_folds, rng.substream(1))?;
    let clustering = rng.substream(2);
    match method {
        Method::Cvrs2 => {
            let out = cvrs2(dataset, &folds, k, clustering)?;
            Ok(MethodRun {
                method,
                mean_coefficients: out.mean_coefficients(),
                scores: out.scores,
                assignment: out.assignment,
            })
        }
        Method::CvrsMarginal => {
            let m1 = cvrs_marginal(dataset, 1, &folds, clustering.substream(1))?;
            let m2 = cvrs_marginal(dataset, 2, &folds, clustering.substream(2))?;
            let assignment = if k == 2 {
                intersect_marginal(&m1.assignment, &m2.assignment)?
            } else {
                combine_marginal(&m1.assignment, &m2.assignment)?
            };
            Ok(MethodRun {
                method,
                scores: m1
                    .scores
                    .iter()
                    .zip(&m2.scores)
                    .map(|(&rs1, &rs2)| RiskScorePair { rs1, rs2 })
                    .collect(),
                assignment,
                mean_coefficients: m1
                    .mean_coefficients()
                    .into_iter()
                    .zip(m2.mean_coefficients())
                    .collect(),
            })
        }
    }
}

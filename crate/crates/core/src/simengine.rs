//! Simulated two-outcome trials with known sensitive subjects.
//!
//! Data generation, in order: subject sensitivity (drawn as one of the four
//! `(S₁, S₂)` quadrants), sensitive covariate index sets, 1:1 Bernoulli arm
//! assignment, block-wise equicorrelated normal covariates, and independent
//! Bernoulli outcomes from logistic linear predictors whose interaction terms
//! are switched on only for sensitive subjects.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{expit, logit};
use crate::scores::TrialDataset;
use crate::statnum::{CovarianceSpec, Matrix, RngStream};

/// Mean, variance and within-block correlation of one covariate block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub mean: f64,
    pub variance: f64,
    pub correlation: f64,
}

impl BlockParams {
    pub const fn new(mean: f64, variance: f64, correlation: f64) -> Self {
        Self {
            mean,
            variance,
            correlation,
        }
    }
}

fn default_n_covariates() -> usize {
    100
}
fn default_k_sens() -> usize {
    10
}
fn default_overlap() -> usize {
    5
}
fn default_control_rate() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub n_subjects: usize,
    #[serde(default = "default_n_covariates")]
    pub n_covariates: usize,
    #[serde(default = "default_k_sens")]
    pub k_sens1: usize,
    #[serde(default = "default_k_sens")]
    pub k_sens2: usize,
    #[serde(default = "default_overlap")]
    pub n_overlap: usize,
    /// Probabilities of `(S₁, S₂)` = (0,0), (0,1), (1,0), (1,1).
    pub cluster_fractions: [f64; 4],
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
    pub rr1: f64,
    pub rr2: f64,
    /// Covariates sensitive to an outcome, in subjects sensitive to it.
    pub sens_params: BlockParams,
    /// Covariates sensitive to an outcome, in subjects not sensitive to it.
    pub nonsens_params: BlockParams,
    /// All remaining covariates, everyone.
    pub noise_params: BlockParams,
    /// Key every sensitive covariate block on `S₁` (the row rule of the
    /// parameter table read literally). By default a block sensitive to one
    /// outcome follows that outcome's `Sᵢ`, and the shared block is elevated
    /// for subjects sensitive to either outcome.
    #[serde(default)]
    pub table2_literal: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.n_subjects < 2 {
            return bad(format!(
                "n_subjects must be at least 2, got {}",
                self.n_subjects
            ));
        }
        if self.n_overlap > self.k_sens1.min(self.k_sens2) {
            return bad(format!(
                "n_overlap = {} exceeds min(k_sens1, k_sens2) = {}",
                self.n_overlap,
                self.k_sens1.min(self.k_sens2)
            ));
        }
        if self.k_sens1 == 0 || self.k_sens2 == 0 {
            return bad("k_sens1 and k_sens2 must be positive".into());
        }
        if self.k_sens1 + self.k_sens2 - self.n_overlap > self.n_covariates {
            return bad(format!(
                "{} sensitive covariates do not fit in n_covariates = {}",
                self.k_sens1 + self.k_sens2 - self.n_overlap,
                self.n_covariates
            ));
        }
        if self
            .cluster_fractions
            .iter()
            .any(|&f| !(0.0..=1.0).contains(&f))
            || (self.cluster_fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "cluster_fractions must be probabilities summing to 1, got {:?}",
                self.cluster_fractions
            ));
        }
        for (name, v) in [
            ("control_rate", self.control_rate),
            ("rr1", self.rr1),
            ("rr2", self.rr2),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.sens_params.mean == 0.0 {
            return bad("sens_params.mean must be nonzero".into());
        }
        for (name, p) in [
            ("sens_params", self.sens_params),
            ("nonsens_params", self.nonsens_params),
            ("noise_params", self.noise_params),
        ] {
            CovarianceSpec::new(1, p.variance, p.correlation)
                .map_err(|e| Error::ConfigInvalid(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    /// Linear-predictor intercept shared by both outcomes.
    pub fn intercept(&self) -> f64 {
        logit(self.control_rate)
    }

    pub fn gammas(&self) -> Result<(f64, f64)> {
        let mu = self.intercept();
        let theta = self.sens_params.mean;
        Ok((
            gamma_coefficient(mu, self.rr1, self.k_sens1, theta)?,
            gamma_coefficient(mu, self.rr2, self.k_sens2, theta)?,
        ))
    }
}

/// Common interaction coefficient that moves a treated sensitive subject with
/// covariates at `theta` from logit `mu` to logit `rr`.
pub fn gamma_coefficient(mu: f64, rr: f64, k: usize, theta: f64) -> Result<f64> {
    if !(rr > 0.0 && rr < 1.0) || k == 0 || theta == 0.0 || !theta.is_finite() || !mu.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma needs rr in (0,1), k >= 1, theta != 0; got rr = {rr}, k = {k}, theta = {theta}"
        )));
    }
    Ok((logit(rr) - mu) / (k as f64 * theta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub s1: Vec<u8>,
    pub s2: Vec<u8>,
    /// (S₁, S₂) quadrant: (0,0) → 1, (0,1) → 2, (1,0) → 3, (1,1) → 4.
    pub true_cluster: Vec<usize>,
    pub sensitive_covariates_1: Vec<usize>,
    pub sensitive_covariates_2: Vec<usize>,
}

impl GroundTruth {
    pub fn n(&self) -> usize {
        self.s1.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Only1,
    Only2,
    Both,
    Noise,
}

struct CovariateLayout {
    /// Covariate indices per block, in index order.
    blocks: [(Block, Vec<usize>); 4],
}

fn draw_layout<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> CovariateLayout {
    let n_sens = config.k_sens1 + config.k_sens2 - config.n_overlap;
    let chosen = sample(rng, config.n_covariates, n_sens).into_vec();
    let only1 = config.k_sens1 - config.n_overlap;
    let mut b_only1 = chosen[..only1].to_vec();
    let mut b_both = chosen[only1..config.k_sens1].to_vec();
    let mut b_only2 = chosen[config.k_sens1..].to_vec();
    let mut is_sens = vec![false; config.n_covariates];
    chosen.iter().for_each(|&j| is_sens[j] = true);
    let b_noise: Vec<usize> = (0..config.n_covariates).filter(|&j| !is_sens[j]).collect();
    b_only1.sort_unstable();
    b_only2.sort_unstable();
    b_both.sort_unstable();
    CovariateLayout {
        blocks: [
            (Block::Only1, b_only1),
            (Block::Only2, b_only2),
            (Block::Both, b_both),
            (Block::Noise, b_noise),
        ],
    }
}

/// Cached Cholesky factors keyed by (block size, parameter set).
struct FactorCache {
    entries: Vec<(usize, u8, Matrix<f64>)>,
}

impl FactorCache {
    fn get(&mut self, dim: usize, which: u8, params: &BlockParams) -> Result<&Matrix<f64>> {
        if let Some(pos) = self
            .entries
            .iter()
            .position(|(d, w, _)| *d == dim && *w == which)
        {
            return Ok(&self.entries[pos].2);
        }
        let l = CovarianceSpec::new(dim, params.variance, params.correlation)?.cholesky()?;
        self.entries.push((dim, which, l));
        Ok(&self.entries.last().expect("just pushed").2)
    }
}

/// Draws one simulated trial and its ground truth from `rng`.
pub fn simulate_dataset(
    config: &ScenarioConfig,
    rng: RngStream,
) -> Result<(TrialDataset, GroundTruth)> {
    config.validate()?;
    let mut r = rng.rng();
    let n = config.n_subjects;

    // Subject sensitivity.
    let cum: Vec<f64> = config
        .cluster_fractions
        .iter()
        .scan(0.0, |acc, &f| {
            *acc += f;
            Some(*acc)
        })
        .collect();
    let mut s1 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    let mut true_cluster = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = r.random();
        let q = cum.iter().position(|&c| u < c).unwrap_or_else(|| {
            config
                .cluster_fractions
                .iter()
                .rposition(|&f| f > 0.0)
                .unwrap_or(0)
        });
        s1.push(u8::from(q >= 2));
        s2.push(u8::from(q % 2 == 1));
        true_cluster.push(q + 1);
    }

    // Covariate sensitivity.
    let layout = draw_layout(config, &mut r);

    // Arms.
    let arm: Vec<u8> = (0..n).map(|_| u8::from(r.random::<bool>())).collect();

    // Covariates, drawn block by block for each subject.
    let mut covariates = vec![vec![0.0; n]; config.n_covariates];
    let mut cache = FactorCache {
        entries: Vec::new(),
    };
    let mut z = Vec::new();
    for i in 0..n {
        for (block, idx) in &layout.blocks {
            if idx.is_empty() {
                continue;
            }
            let sensitive = match block {
                _ if config.table2_literal => *block != Block::Noise && s1[i] == 1,
                Block::Only1 => s1[i] == 1,
                Block::Only2 => s2[i] == 1,
                Block::Both => s1[i] == 1 || s2[i] == 1,
                Block::Noise => false,
            };
            let (which, params) = match (block, sensitive) {
                (Block::Noise, _) => (2u8, &config.noise_params),
                (_, true) => (0u8, &config.sens_params),
                (_, false) => (1u8, &config.nonsens_params),
            };
            let l = cache.get(idx.len(), which, params)?;
            z.clear();
            z.extend((0..idx.len()).map(|_| -> f64 { StandardNormal.sample(&mut r) }));
            for (a, &j) in idx.iter().enumerate() {
                let row = l.row(a);
                let dev: f64 = (0..=a).map(|b| row[b] * z[b]).sum();
                covariates[j][i] = params.mean + dev;
            }
        }
    }

    // Outcomes.
    let mu = config.intercept();
    let (gamma1, gamma2) = config.gammas()?;
    let mut sens1: Vec<usize> = layout.blocks[0]
        .1
        .iter()
        .chain(&layout.blocks[2].1)
        .copied()
        .collect();
    let mut sens2: Vec<usize> = layout.blocks[1]
        .1
        .iter()
        .chain(&layout.blocks[2].1)
        .copied()
        .collect();
    sens1.sort_unstable();
    sens2.sort_unstable();
    let mut y1 = Vec::with_capacity(n);
    let mut y2 = Vec::with_capacity(n);
    for i in 0..n {
        let (w1, w2) = linear_predictors(
            mu,
            (gamma1, gamma2),
            (s1[i], s2[i]),
            arm[i],
            |j| covariates[j][i],
            (&sens1, &sens2),
        );
        y1.push(u8::from(r.random::<f64>() < expit(w1)));
        y2.push(u8::from(r.random::<f64>() < expit(w2)));
    }

    let dataset = TrialDataset::new(arm, y1, y2, covariates)
        .map_err(|e| Error::ConfigInvalid(format!("simulated dataset is unusable: {e}")))?;
    Ok((
        dataset,
        GroundTruth {
            s1,
            s2,
            true_cluster,
            sensitive_covariates_1: sens1,
            sensitive_covariates_2: sens2,
        },
    ))
}

/// Linear predictors `(ω₁, ω₂)` of one subject.
pub fn linear_predictors(
    mu: f64,
    gammas: (f64, f64),
    sensitivity: (u8, u8),
    arm: u8,
    x: impl Fn(usize) -> f64,
    sensitive_sets: (&[usize], &[usize]),
) -> (f64, f64) {
    let t = f64::from(arm);
    let w = |gamma: f64, s: u8, set: &[usize]| {
        if s == 1 && arm == 1 {
            mu + gamma * t * set.iter().map(|&j| x(j)).sum::<f64>()
        } else {
            mu
        }
    };
    (
        w(gammas.0, sensitivity.0, sensitive_sets.0),
        w(gammas.1, sensitivity.1, sensitive_sets.1),
    )
}

/// Table 1 style scenario presets.
pub mod presets {
    use super::{BlockParams, ScenarioConfig};

    const SENS: BlockParams = BlockParams::new(1.0, 0.25, 0.0);
    const NONSENS: BlockParams = BlockParams::new(0.0, 0.01, 0.0);
    const NOISE: BlockParams = BlockParams::new(0.0, 0.25, 0.0);

    fn base(name: &str, n: usize, fractions: [f64; 4], rr: f64) -> ScenarioConfig {
        ScenarioConfig {
            name: name.to_string(),
            n_subjects: n,
            n_covariates: 100,
            k_sens1: 10,
            k_sens2: 10,
            n_overlap: 5,
            cluster_fractions: fractions,
            control_rate: 0.25,
            rr1: rr,
            rr2: rr,
            sens_params: SENS,
            nonsens_params: NONSENS,
            noise_params: NOISE,
            table2_literal: false,
        }
    }

    /// Scenario I: one sensitive group (high on both outcomes).
    pub fn scenario1(n: usize, sensitive_fraction: f64) -> ScenarioConfig {
        let pct = (sensitive_fraction * 100.0).round() as u32;
        base(
            &format!("scenario1_{pct}pct"),
            n,
            [1.0 - sensitive_fraction, 0.0, 0.0, sensitive_fraction],
            0.7,
        )
    }

    /// Scenario II: four clusters, the three sensitive ones at 10% each.
    pub fn scenario2(n: usize, high_rate: f64) -> ScenarioConfig {
        let tag = match (high_rate * 10.0).round() as u32 {
            8 => "scenario2a",
            7 => "scenario2b",
            6 => "scenario2c",
            _ => "scenario2",
        };
        base(tag, n, [0.7, 0.1, 0.1, 0.1], high_rate)
    }

    /// Scenario III: scenario IIa with correlation 0.4 within every block.
    pub fn scenario3(n: usize) -> ScenarioConfig {
        let mut c = base("scenario3", n, [0.7, 0.1, 0.1, 0.1], 0.8);
        c.sens_params.correlation = 0.4;
        c.nonsens_params.correlation = 0.4;
        c.noise_params.correlation = 0.4;
        c
    }

    /// Scenario IV: null, every rate 0.25.
    pub fn scenario4(n: usize) -> ScenarioConfig {
        base("scenario4", n, [0.7, 0.1, 0.1, 0.1], 0.25)
    }
}

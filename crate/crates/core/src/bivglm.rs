//! Bivariate odds-ratio (Plackett) regression for two binary outcomes.
//!
//! Each outcome has its own logistic margin with columns `1, t, x, t·x`; the
//! two margins are linked by a constant odds ratio `ψ`, estimated on the log
//! scale. Parameter layout (see [`Param`]):
//!
//! ```text
//! [μ₁, λ₁, α₁, β₁, μ₂, λ₂, α₂, β₂, log ψ]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{expit, logit, Scalar};
use crate::optim::{maximize_bfgs, spd_inverse, BfgsOptions};
use crate::statnum::{cholesky, Matrix};

pub const N_PARAMS: usize = 9;
/// Value returned by [`biv_loglik`] when an observed cell probability underflows.
pub const LOGLIK_GUARD: f64 = -1e300;
/// Bound on |parameter| for every parameter except log ψ.
pub const COEFFICIENT_BOUND: f64 = 10.0;
pub const LOG_PSI_BOUND: f64 = 20.0;
pub const PROBABILITY_EDGE: f64 = 1e-6;
const PSI_ONE_TOLERANCE: f64 = 1e-12;

/// Named offsets into the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Intercept1 = 0,
    Treatment1 = 1,
    Covariate1 = 2,
    Interaction1 = 3,
    Intercept2 = 4,
    Treatment2 = 5,
    Covariate2 = 6,
    Interaction2 = 7,
    LogPsi = 8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCellProbs<T> {
    pub p11: T,
    pub p10: T,
    pub p01: T,
    pub p00: T,
}

impl<T: Scalar> JointCellProbs<T> {
    /// Probability of the cell `(y1, y2)`.
    #[inline]
    pub fn cell(&self, y1: u8, y2: u8) -> T {
        match (y1, y2) {
            (1, 1) => self.p11,
            (1, _) => self.p10,
            (_, 1) => self.p01,
            _ => self.p00,
        }
    }

    pub fn odds_ratio(&self) -> T {
        (self.p11 * self.p00) / (self.p10 * self.p01)
    }
}

/// Joint cell probabilities with margins `p1`, `p2` and odds ratio `psi`.
pub fn plackett_joint<T: Scalar>(p1: T, p2: T, psi: T) -> Result<JointCellProbs<T>> {
    let zero = T::zero();
    let one = T::one();
    if !(p1 > zero && p1 < one && p2 > zero && p2 < one) {
        return Err(Error::InvalidInput(format!(
            "marginal probabilities must lie in (0, 1), got ({p1}, {p2})"
        )));
    }
    if !(psi > zero) || !psi.is_finite() {
        return Err(Error::InvalidInput(format!(
            "odds ratio must be positive, got {psi}"
        )));
    }
    Ok(joint_cells(p1, p2, psi))
}

/// [`plackett_joint`] without input validation.
#[inline]
fn joint_cells<T: Scalar>(p1: T, p2: T, psi: T) -> JointCellProbs<T> {
    let zero = T::zero();
    let one = T::one();
    let p11 = if (psi - one).abs() <= T::lit(PSI_ONE_TOLERANCE) {
        p1 * p2
    } else {
        // Smaller root of (ψ−1)u² − s·u + ψ·p1·p2 = 0, evaluated in the form
        // that avoids cancellation for either sign of s.
        let pm1 = psi - one;
        let s = one + (p1 + p2) * pm1;
        let disc = (s * s - T::lit(4.0) * psi * pm1 * p1 * p2).max(zero);
        let root = disc.sqrt();
        if s >= zero {
            T::lit(2.0) * psi * p1 * p2 / (s + root)
        } else {
            (s - root) / (T::lit(2.0) * pm1)
        }
    };
    let lower = (p1 + p2 - one).max(zero);
    let p11 = p11.max(lower).min(p1.min(p2));
    JointCellProbs {
        p11,
        p10: (p1 - p11).max(zero),
        p01: (p2 - p11).max(zero),
        p00: (one - p1 - p2 + p11).max(zero),
    }
}

/// Columns for one single-covariate bivariate fit.
#[derive(Debug, Clone, Copy)]
pub struct BivariateData<'a> {
    pub x: &'a [f64],
    pub treatment: &'a [u8],
    pub y1: &'a [u8],
    pub y2: &'a [u8],
}

impl<'a> BivariateData<'a> {
    pub fn new(x: &'a [f64], treatment: &'a [u8], y1: &'a [u8], y2: &'a [u8]) -> Result<Self> {
        let n = x.len();
        for len in [treatment.len(), y1.len(), y2.len()] {
            if len != n {
                return Err(Error::LengthMismatch(n, len));
            }
        }
        if [treatment, y1, y2].iter().any(|c| c.iter().any(|&v| v > 1)) {
            return Err(Error::InvalidInput(
                "treatment and outcomes must be 0/1".into(),
            ));
        }
        Ok(Self {
            x,
            treatment,
            y1,
            y2,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[inline]
fn margins<T: Scalar>(params: &[T], t: T, x: T) -> (T, T) {
    let tx = t * x;
    let eta1 = params[0] + params[1] * t + params[2] * x + params[3] * tx;
    let eta2 = params[4] + params[5] * t + params[6] * x + params[7] * tx;
    (expit(eta1), expit(eta2))
}

/// Multinomial log-likelihood of the observed `(y1, y2)` cells.
pub fn biv_loglik<T: Scalar>(params: &[T], data: &BivariateData<'_>) -> Result<T> {
    if params.len() != N_PARAMS {
        return Err(Error::DimensionMismatch {
            expected: N_PARAMS,
            got: params.len(),
        });
    }
    Ok(loglik_unchecked(params, data))
}

fn loglik_unchecked<T: Scalar>(params: &[T], data: &BivariateData<'_>) -> T {
    let psi = params[8].exp();
    let mut total = T::zero();
    for i in 0..data.len() {
        let t = T::lit(f64::from(data.treatment[i]));
        let x = T::lit(data.x[i]);
        let (p1, p2) = margins(params, t, x);
        let prob = joint_cells(p1, p2, psi).cell(data.y1[i], data.y2[i]);
        if !(prob > T::zero()) || !psi.is_finite() {
            return T::lit(LOGLIK_GUARD);
        }
        total += prob.ln();
    }
    total
}

/// Compact per-subject record used inside the optimizer.
#[derive(Debug, Clone, Copy)]
struct Obs {
    t: f64,
    x: f64,
    y1: u8,
    y2: u8,
}

fn compact(data: &BivariateData<'_>) -> Vec<Obs> {
    (0..data.len())
        .map(|i| Obs {
            t: f64::from(data.treatment[i]),
            x: data.x[i],
            y1: data.y1[i],
            y2: data.y2[i],
        })
        .collect()
}

/// Per-subject score of the log-likelihood; returns the log cell probability
/// or `None` on underflow.
#[inline]
fn subject_score(params: &[f64], psi: f64, o: &Obs, score: &mut [f64; N_PARAMS]) -> Option<f64> {
    let (p1, p2) = margins(params, o.t, o.x);
    let c = joint_cells(p1, p2, psi);
    // Implicit derivatives of p11 from p11·p00 = ψ·p10·p01.
    let denom = c.p00 + c.p11 + psi * (c.p10 + c.p01);
    let d1 = (c.p11 + psi * c.p01) / denom;
    let d2 = (c.p11 + psi * c.p10) / denom;
    let dpsi = psi * c.p10 * c.p01 / denom;
    let (prob, dp1, dp2, dl) = match (o.y1, o.y2) {
        (1, 1) => (c.p11, d1, d2, dpsi),
        (1, _) => (c.p10, 1.0 - d1, -d2, -dpsi),
        (_, 1) => (c.p01, -d1, 1.0 - d2, -dpsi),
        _ => (c.p00, d1 - 1.0, d2 - 1.0, dpsi),
    };
    if !(prob > 0.0) {
        return None;
    }
    let g1 = dp1 / prob * p1 * (1.0 - p1);
    let g2 = dp2 / prob * p2 * (1.0 - p2);
    let tx = o.t * o.x;
    *score = [
        g1,
        g1 * o.t,
        g1 * o.x,
        g1 * tx,
        g2,
        g2 * o.t,
        g2 * o.x,
        g2 * tx,
        dl / prob,
    ];
    Some(prob.ln())
}

fn loglik_and_gradient(params: &[f64], obs: &[Obs], grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let psi = params[8].exp();
    if !psi.is_finite() || psi <= 0.0 {
        return LOGLIK_GUARD;
    }
    let mut total = 0.0;
    let mut s = [0.0; N_PARAMS];
    for o in obs {
        match subject_score(params, psi, o, &mut s) {
            Some(lp) => {
                total += lp;
                for (g, v) in grad.iter_mut().zip(&s) {
                    *g += v;
                }
            }
            None => {
                grad.iter_mut().for_each(|g| *g = 0.0);
                return LOGLIK_GUARD;
            }
        }
    }
    total
}

/// Analytic gradient of [`biv_loglik`] (f64).
pub fn biv_gradient(params: &[f64], data: &BivariateData<'_>) -> Result<Vec<f64>> {
    if params.len() != N_PARAMS {
        return Err(Error::DimensionMismatch {
            expected: N_PARAMS,
            got: params.len(),
        });
    }
    let mut g = vec![0.0; N_PARAMS];
    loglik_and_gradient(params, &compact(data), &mut g);
    Ok(g)
}

/// Central-difference gradient with step `1e−6·max(1, |param|)`.
pub fn biv_numeric_gradient(params: &[f64], data: &BivariateData<'_>) -> Result<Vec<f64>> {
    if params.len() != N_PARAMS {
        return Err(Error::DimensionMismatch {
            expected: N_PARAMS,
            got: params.len(),
        });
    }
    let mut work = params.to_vec();
    let mut g = vec![0.0; N_PARAMS];
    for k in 0..N_PARAMS {
        let h = 1e-6 * params[k].abs().max(1.0);
        work[k] = params[k] + h;
        let up = loglik_unchecked(&work, data);
        work[k] = params[k] - h;
        let down = loglik_unchecked(&work, data);
        work[k] = params[k];
        g[k] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Closed-form score of the Plackett likelihood.
    #[default]
    Analytic,
    /// Central differences of the log-likelihood.
    CentralDifference,
}

#[derive(Debug, Clone, Copy)]
pub struct BivariateFitOptions {
    pub gradient: GradientMode,
    pub bfgs: BfgsOptions,
}

impl Default for BivariateFitOptions {
    fn default() -> Self {
        Self {
            gradient: GradientMode::Analytic,
            bfgs: BfgsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateFit {
    pub params: [f64; N_PARAMS],
    pub converged: bool,
    pub diverged_or_separated: bool,
    pub loglik: f64,
    pub iterations: usize,
}

impl BivariateFit {
    pub fn param(&self, p: Param) -> f64 {
        self.params[p as usize]
    }

    /// Interaction coefficients `(β₁, β₂)` as they enter the risk scores.
    pub fn interactions(&self) -> (f64, f64) {
        (
            self.param(Param::Interaction1),
            self.param(Param::Interaction2),
        )
    }

    pub fn psi(&self) -> f64 {
        self.param(Param::LogPsi).exp()
    }
}

/// Whether the columns `1, t, x, t·x` are linearly independent.
fn design_full_rank(obs: &[Obs]) -> bool {
    let mut g = Matrix::<f64>::zeros(4, 4);
    for o in obs {
        let row = [1.0, o.t, o.x, o.t * o.x];
        for a in 0..4 {
            for b in 0..=a {
                g[(a, b)] += row[a] * row[b];
            }
        }
    }
    // Scale to unit diagonal so the pivot test is relative.
    let d: Vec<f64> = (0..4).map(|a| g[(a, a)].sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0)) {
        return false;
    }
    let scaled = Matrix::from_fn(4, 4, |a, b| {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        g[(hi, lo)] / (d[a] * d[b])
    });
    match cholesky(&scaled) {
        Ok(l) => (0..4).all(|a| l[(a, a)] * l[(a, a)] > 1e-10),
        Err(_) => false,
    }
}

fn starting_point(obs: &[Obs]) -> [f64; N_PARAMS] {
    let n = obs.len() as f64;
    let m1 = obs.iter().filter(|o| o.y1 == 1).count() as f64 / n;
    let m2 = obs.iter().filter(|o| o.y2 == 1).count() as f64 / n;
    let mut cells = [0.5_f64; 4];
    for o in obs {
        cells[usize::from(2 * o.y1 + o.y2)] += 1.0;
    }
    let log_or = ((cells[3] * cells[0]) / (cells[2] * cells[1]))
        .ln()
        .clamp(-5.0, 5.0);
    let safe_logit = |m: f64| logit(m.clamp(1e-4, 1.0 - 1e-4));
    let mut p = [0.0; N_PARAMS];
    p[0] = safe_logit(m1);
    p[4] = safe_logit(m2);
    p[8] = log_or;
    p
}

fn outer_product_inverse(params: &[f64], obs: &[Obs]) -> Matrix<f64> {
    let psi = params[8].exp();
    let mut opg = Matrix::<f64>::zeros(N_PARAMS, N_PARAMS);
    let mut s = [0.0; N_PARAMS];
    for o in obs {
        if subject_score(params, psi, o, &mut s).is_some() {
            for a in 0..N_PARAMS {
                for b in 0..N_PARAMS {
                    opg[(a, b)] += s[a] * s[b];
                }
            }
        }
    }
    let ridge = (0..N_PARAMS).map(|a| opg[(a, a)]).sum::<f64>() / N_PARAMS as f64 * 1e-8 + 1e-12;
    for a in 0..N_PARAMS {
        opg[(a, a)] += ridge;
    }
    spd_inverse(&opg).unwrap_or_else(|| {
        let mut h = Matrix::identity(N_PARAMS);
        let scale = 4.0 / obs.len().max(1) as f64;
        for a in 0..N_PARAMS {
            h[(a, a)] = scale;
        }
        h
    })
}

fn out_of_bounds(params: &[f64]) -> bool {
    params[..8]
        .iter()
        .any(|v| !v.is_finite() || v.abs() > COEFFICIENT_BOUND)
        || !params[8].is_finite()
        || params[8].abs() > LOG_PSI_BOUND
}

fn margins_at_edge(params: &[f64], obs: &[Obs]) -> bool {
    obs.iter().any(|o| {
        let (p1, p2) = margins(params, o.t, o.x);
        [p1, p2]
            .iter()
            .any(|p| !(PROBABILITY_EDGE..=1.0 - PROBABILITY_EDGE).contains(p))
    })
}

/// Maximum-likelihood bivariate odds-ratio fit for one covariate.
///
/// Never fails on numerical grounds: degenerate, separated or non-converged
/// fits come back with `diverged_or_separated` set and both interaction
/// coefficients zeroed.
pub fn fit_bivariate_or(data: &BivariateData<'_>) -> Result<BivariateFit> {
    fit_bivariate_or_with(data, &BivariateFitOptions::default())
}

pub fn fit_bivariate_or_with(
    data: &BivariateData<'_>,
    opts: &BivariateFitOptions,
) -> Result<BivariateFit> {
    if !data.treatment.contains(&0) || !data.treatment.contains(&1) {
        return Err(Error::InvalidInput("both arms must be present".into()));
    }
    let obs = compact(data);
    let zero_fit = |params: [f64; N_PARAMS], loglik: f64, iterations: usize| {
        let mut params = params;
        params[Param::Interaction1 as usize] = 0.0;
        params[Param::Interaction2 as usize] = 0.0;
        BivariateFit {
            params,
            converged: false,
            diverged_or_separated: true,
            loglik,
            iterations,
        }
    };

    let mut start = starting_point(&obs);
    let mut scratch = [0.0; N_PARAMS];
    let zeros = [0.0; N_PARAMS];
    if loglik_and_gradient(&zeros, &obs, &mut scratch)
        > loglik_and_gradient(&start, &obs, &mut scratch)
    {
        start = zeros;
    }
    if !design_full_rank(&obs) {
        let ll = loglik_and_gradient(&start, &obs, &mut scratch);
        return Ok(zero_fit(start, ll, 0));
    }

    let h0 = outer_product_inverse(&start, &obs);
    let outcome = match opts.gradient {
        GradientMode::Analytic => maximize_bfgs(
            |p, g| loglik_and_gradient(p, &obs, g),
            &start,
            h0,
            &opts.bfgs,
            out_of_bounds,
        ),
        GradientMode::CentralDifference => maximize_bfgs(
            |p, g| {
                let f = loglik_unchecked(p, data);
                let ng = biv_numeric_gradient(p, data).expect("nine parameters");
                g.copy_from_slice(&ng);
                f
            },
            &start,
            h0,
            &opts.bfgs,
            out_of_bounds,
        ),
    };

    let mut params = [0.0; N_PARAMS];
    params.copy_from_slice(&outcome.x);
    let bad = !outcome.converged || out_of_bounds(&params) || margins_at_edge(&params, &obs);
    if bad {
        return Ok(zero_fit(params, outcome.value, outcome.iterations));
    }
    Ok(BivariateFit {
        params,
        converged: true,
        diverged_or_separated: false,
        loglik: outcome.value,
        iterations: outcome.iterations,
    })
}

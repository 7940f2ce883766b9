//! Logistic regression by iteratively reweighted least squares.
//!
//! Used for the single-covariate treatment interaction coefficient of the
//! marginal (one outcome) risk score and for the treatment × sensitivity
//! Wald test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::TestOutcome;
use crate::num::{expit, logit, Scalar};
use crate::statnum::{cholesky, cholesky_inverse, cholesky_solve, normal_sf, Matrix};

pub const MAX_IRLS_ITERATIONS: usize = 50;
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const DEVIANCE_TOLERANCE: f64 = 1e-10;
/// Any |coefficient| beyond this marks the fit as separated.
pub const COEFFICIENT_BOUND: f64 = 10.0;
/// Fitted probabilities this close to 0 or 1 mark the fit as separated.
pub const PROBABILITY_EDGE: f64 = 1e-6;

const MAX_STEP_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<T> {
    pub coefficients: Vec<T>,
    pub standard_errors: Vec<T>,
    pub converged: bool,
    pub diverged_or_separated: bool,
    pub n_iterations: usize,
    /// Deviance after each accepted IRLS step, starting value first.
    pub deviance_trace: Vec<T>,
}

impl<T: Scalar> LogisticFit<T> {
    pub fn deviance(&self) -> T {
        self.deviance_trace.last().copied().unwrap_or_else(T::nan)
    }

    fn zeroed(p: usize, n_iterations: usize, deviance_trace: Vec<T>) -> Self {
        Self {
            coefficients: vec![T::zero(); p],
            standard_errors: vec![T::nan(); p],
            converged: false,
            diverged_or_separated: true,
            n_iterations,
            deviance_trace,
        }
    }
}

fn check_binary(values: &[u8], what: &str) -> Result<()> {
    match values.iter().find(|&&v| v > 1) {
        Some(v) => Err(Error::InvalidInput(format!(
            "{what} must be 0/1, found {v}"
        ))),
        None => Ok(()),
    }
}

/// log(1 + e^x) without overflow.
#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn deviance<T: Scalar>(eta: &[T], y: &[u8]) -> T {
    // -2 * sum(y*eta - log(1 + e^eta))
    let two = T::lit(2.0);
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let ll = if yi == 1 { -softplus(-e) } else { -softplus(e) };
            -two * ll
        })
        .sum()
}

fn linear_predictor<T: Scalar>(design: &Matrix<T>, beta: &[T], out: &mut [T]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = design.row(i).iter().zip(beta).map(|(&x, &b)| x * b).sum();
    }
}

/// Maximum-likelihood logistic regression of `response` on the columns of `design`.
///
/// When the first column is all ones it is treated as the intercept and started
/// at the logit of the response mean; every other coefficient starts at zero.
pub fn fit_logistic<T: Scalar>(design: &Matrix<T>, response: &[u8]) -> Result<LogisticFit<T>> {
    let n = design.rows();
    let p = design.cols();
    if response.len() != n {
        return Err(Error::LengthMismatch(n, response.len()));
    }
    if p == 0 || n < p {
        return Err(Error::InvalidInput(format!(
            "logistic fit needs n >= p >= 1, got n = {n}, p = {p}"
        )));
    }
    check_binary(response, "response")?;

    let ybar = response.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
    let has_intercept = (0..n).all(|i| design[(i, 0)] == T::one());
    let mut beta = vec![T::zero(); p];
    if has_intercept && ybar > 0.0 && ybar < 1.0 {
        beta[0] = logit(T::lit(ybar));
    }

    let mut eta = vec![T::zero(); n];
    linear_predictor(design, &beta, &mut eta);
    let mut dev = deviance(&eta, response);
    let mut trace = vec![dev];
    let score_tol = T::lit(SCORE_TOLERANCE);
    let dev_tol = T::lit(DEVIANCE_TOLERANCE);

    let mut converged = false;
    let mut separated = ybar == 0.0 || ybar == 1.0;
    let mut iterations = 0;
    let mut info_factor: Option<Matrix<T>> = None;

    while !separated && iterations < MAX_IRLS_ITERATIONS {
        let (score, info) = score_and_information(design, response, &eta);
        let factor = match cholesky(&info) {
            Ok(l) => l,
            Err(_) => return Ok(LogisticFit::zeroed(p, iterations, trace)),
        };
        let max_score = score.iter().fold(T::zero(), |m, s| m.max(s.abs()));
        if max_score <= score_tol {
            converged = true;
            info_factor = Some(factor);
            break;
        }
        let step = cholesky_solve(&factor, &score)?;
        iterations += 1;

        let mut scale = T::one();
        let mut accepted = false;
        let mut trial = beta.clone();
        for _ in 0..=MAX_STEP_HALVINGS {
            for ((t, &b), &s) in trial.iter_mut().zip(&beta).zip(&step) {
                *t = b + scale * s;
            }
            linear_predictor(design, &trial, &mut eta);
            let new_dev = deviance(&eta, response);
            if new_dev.is_finite() && new_dev <= dev {
                let rel = (dev - new_dev) / (dev.abs() + T::lit(0.1));
                beta.copy_from_slice(&trial);
                dev = new_dev;
                trace.push(dev);
                accepted = true;
                if rel <= dev_tol {
                    converged = true;
                }
                break;
            }
            scale *= T::lit(0.5);
        }
        if !accepted {
            // No descent along the Newton direction: restore and stop.
            linear_predictor(design, &beta, &mut eta);
            break;
        }
        separated = is_separated(&beta, &eta);
        if converged {
            let (_, info) = score_and_information(design, response, &eta);
            info_factor = cholesky(&info).ok();
            break;
        }
    }

    separated = separated || is_separated(&beta, &eta);
    let standard_errors = match (&info_factor, separated) {
        (Some(l), false) => {
            let inv = cholesky_inverse(l);
            (0..p).map(|j| inv[(j, j)].sqrt()).collect()
        }
        _ => vec![T::nan(); p],
    };
    if !separated && info_factor.is_none() && converged {
        return Ok(LogisticFit::zeroed(p, iterations, trace));
    }
    Ok(LogisticFit {
        coefficients: beta,
        standard_errors,
        converged: converged && !separated,
        diverged_or_separated: separated || !converged,
        n_iterations: iterations,
        deviance_trace: trace,
    })
}

fn score_and_information<T: Scalar>(
    design: &Matrix<T>,
    response: &[u8],
    eta: &[T],
) -> (Vec<T>, Matrix<T>) {
    let p = design.cols();
    let mut score = vec![T::zero(); p];
    let mut info = Matrix::zeros(p, p);
    for (i, &e) in eta.iter().enumerate() {
        let mu = expit(e);
        let w = mu * (T::one() - mu);
        let resid = T::lit(f64::from(response[i])) - mu;
        let row = design.row(i);
        for a in 0..p {
            score[a] += row[a] * resid;
            let wa = w * row[a];
            for b in 0..=a {
                info[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    (score, info)
}

fn is_separated<T: Scalar>(beta: &[T], eta: &[T]) -> bool {
    let bound = T::lit(COEFFICIENT_BOUND);
    let edge = T::lit(PROBABILITY_EDGE);
    beta.iter().any(|b| !b.is_finite() || b.abs() > bound)
        || eta.iter().any(|&e| {
            let mu = expit(e);
            mu < edge || mu > T::one() - edge
        })
}

/// Design matrix with columns `1, t, x, t·x`.
pub fn interaction_design(x: &[f64], treatment: &[u8]) -> Matrix<f64> {
    Matrix::from_fn(x.len(), 4, |i, j| {
        let t = f64::from(treatment[i]);
        match j {
            0 => 1.0,
            1 => t,
            2 => x[i],
            _ => t * x[i],
        }
    })
}

/// Treatment × covariate interaction coefficient from the single-covariate
/// logistic model `1 + t + x + t·x`; zero whenever the fit is degenerate.
pub fn fit_single_covariate_interaction(
    x: &[f64],
    treatment: &[u8],
    response: &[u8],
) -> Result<f64> {
    if x.len() != treatment.len() {
        return Err(Error::LengthMismatch(x.len(), treatment.len()));
    }
    if x.len() != response.len() {
        return Err(Error::LengthMismatch(x.len(), response.len()));
    }
    check_binary(treatment, "treatment")?;
    if !treatment.contains(&0) || !treatment.contains(&1) {
        return Err(Error::InvalidInput("both arms must be present".into()));
    }
    if x.len() < 4 {
        return Ok(0.0);
    }
    let fit = fit_logistic(&interaction_design(x, treatment), response)?;
    if fit.diverged_or_separated || !fit.coefficients[3].is_finite() {
        Ok(0.0)
    } else {
        Ok(fit.coefficients[3])
    }
}

/// Two-sided Wald test of the `t × s` coefficient in `response ~ 1 + t + s + t·s`.
pub fn interaction_wald_p(
    treatment: &[u8],
    sensitive: &[u8],
    response: &[u8],
) -> Result<TestOutcome> {
    let n = treatment.len();
    if sensitive.len() != n {
        return Err(Error::LengthMismatch(n, sensitive.len()));
    }
    if response.len() != n {
        return Err(Error::LengthMismatch(n, response.len()));
    }
    check_binary(treatment, "treatment")?;
    check_binary(sensitive, "sensitivity indicator")?;
    let mut cells = [0usize; 4];
    for (&t, &s) in treatment.iter().zip(sensitive) {
        cells[usize::from(2 * t + s)] += 1;
    }
    let name = "interaction_wald";
    if cells.contains(&0) {
        return Ok(TestOutcome::degenerate(name));
    }
    let design = Matrix::from_fn(n, 4, |i, j| {
        let t = f64::from(treatment[i]);
        let s = f64::from(sensitive[i]);
        match j {
            0 => 1.0,
            1 => t,
            2 => s,
            _ => t * s,
        }
    });
    let fit = fit_logistic(&design, response)?;
    let se = fit.standard_errors[3];
    if fit.diverged_or_separated || !se.is_finite() || se <= 0.0 {
        return Ok(TestOutcome::degenerate(name));
    }
    let z = fit.coefficients[3] / se;
    Ok(TestOutcome {
        p_value: (2.0 * normal_sf(z.abs())).min(1.0),
        statistic: z,
        test_name: name.to_string(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statnum::RngStream;
    use rand::Rng;

    fn intercept_only(n: usize) -> Matrix<f64> {
        Matrix::from_fn(n, 1, |_, _| 1.0)
    }

    #[test]
    fn intercept_only_recovers_logit_of_mean() {
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let fit = fit_logistic(&intercept_only(40), &y).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - (0.25f64 / 0.75).ln()).abs() < 1e-9);
        assert!((fit.coefficients[0] + 1.098612).abs() < 1e-6);
    }

    #[test]
    fn single_precision_intercept() {
        let y: Vec<u8> = (0..40).map(|i| u8::from(i % 4 == 0)).collect();
        let design = Matrix::<f32>::from_fn(40, 1, |_, _| 1.0);
        let fit = fit_logistic(&design, &y).unwrap();
        assert!((fit.coefficients[0] + 1.098612).abs() < 1e-4);
    }

    #[test]
    fn complete_separation_is_flagged() {
        let xs: Vec<f64> = (-10..=10).filter(|&v| v != 0).map(f64::from).collect();
        let y: Vec<u8> = xs.iter().map(|&x| u8::from(x > 0.0)).collect();
        let design = Matrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let fit = fit_logistic(&design, &y).unwrap();
        assert!(fit.diverged_or_separated);
        assert!(!fit.converged);
    }

    #[test]
    fn singular_information_zeroes_fit() {
        // Duplicate column.
        let design = Matrix::from_fn(20, 3, |i, j| if j == 0 { 1.0 } else { (i % 5) as f64 });
        let y: Vec<u8> = (0..20).map(|i| u8::from(i % 3 == 0)).collect();
        let fit = fit_logistic(&design, &y).unwrap();
        assert!(fit.diverged_or_separated);
        assert!(fit.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn deviance_never_increases() {
        let mut rng = RngStream::new(5, 0).rng();
        for _ in 0..20 {
            let n = 60;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let y: Vec<u8> = x
                .iter()
                .zip(&t)
                .map(|(&xi, &ti)| {
                    u8::from(rng.random::<f64>() < expit(-0.5 + 0.8 * xi * f64::from(ti)))
                })
                .collect();
            let fit = fit_logistic(&interaction_design(&x, &t), &y).unwrap();
            for w in fit.deviance_trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fit_logistic(&intercept_only(3), &[0, 1]).is_err());
        assert!(fit_logistic(&intercept_only(2), &[0, 2]).is_err());
        assert!(fit_single_covariate_interaction(&[1.0, 2.0], &[1, 1], &[0, 1]).is_err());
    }

    #[test]
    fn constant_covariate_gives_zero_interaction() {
        let n = 50;
        let x = vec![3.0; n];
        let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        assert_eq!(fit_single_covariate_interaction(&x, &t, &y).unwrap(), 0.0);
    }

    #[test]
    fn wald_empty_group_is_degenerate() {
        let t = [0, 1, 0, 1];
        let s = [0, 0, 0, 0];
        let y = [0, 1, 1, 0];
        let out = interaction_wald_p(&t, &s, &y).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn wald_matches_saturated_closed_form() {
        // For the saturated 2x2x2 model the interaction is a difference of
        // cell log-odds with variance sum(1/(n p (1-p))).
        let mut t = Vec::new();
        let mut s = Vec::new();
        let mut y = Vec::new();
        let cells = [
            (0u8, 0u8, 50usize, 12usize),
            (0, 1, 50, 15),
            (1, 0, 50, 13),
            (1, 1, 50, 35),
        ];
        for &(tt, ss, n, k) in &cells {
            for i in 0..n {
                t.push(tt);
                s.push(ss);
                y.push(u8::from(i < k));
            }
        }
        let lo = |n: usize, k: usize| (k as f64 / (n - k) as f64).ln();
        let var = |n: usize, k: usize| {
            let p = k as f64 / n as f64;
            1.0 / (n as f64 * p * (1.0 - p))
        };
        let beta = lo(50, 35) - lo(50, 13) - lo(50, 15) + lo(50, 12);
        let se = (var(50, 12) + var(50, 15) + var(50, 13) + var(50, 35)).sqrt();
        let out = interaction_wald_p(&t, &s, &y).unwrap();
        assert!((out.statistic - beta / se).abs() < 1e-6);
    }

    #[test]
    fn wald_strong_interaction() {
        let mut t = Vec::new();
        let mut s = Vec::new();
        let mut y = Vec::new();
        // rates: treated sensitive 0.9, all other cells 0.1; 100 per cell
        for &(tt, ss, rate) in &[(1u8, 1u8, 0.9), (1, 0, 0.1), (0, 1, 0.1), (0, 0, 0.1)] {
            let k = (rate * 100.0) as usize;
            for i in 0..100 {
                t.push(tt);
                s.push(ss);
                y.push(u8::from(i < k));
            }
        }
        let out = interaction_wald_p(&t, &s, &y).unwrap();
        assert!(!out.degenerate);
        assert!(out.p_value < 1e-4, "p = {}", out.p_value);
    }
}

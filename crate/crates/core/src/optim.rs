//! Dense BFGS for small smooth maximization problems.

use crate::statnum::{cholesky, cholesky_inverse, Matrix};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Cap on the ∞-norm of the first trial step of each line search.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-6,
            max_iterations: 200,
            max_step: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_inf_norm: f64,
    pub converged: bool,
    pub aborted: bool,
    pub iterations: usize,
}

/// Inverse of a symmetric positive definite matrix, or `None`.
pub fn spd_inverse(m: &Matrix<f64>) -> Option<Matrix<f64>> {
    cholesky(m).ok().map(|l| cholesky_inverse(&l))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `objective` starting at `x0`.
///
/// `objective(x, grad)` returns the value and writes the gradient. `h0` is the
/// initial inverse-Hessian approximation of the *negated* objective (positive
/// definite). `abort(x)` is checked after every accepted step; returning `true`
/// stops the search with `aborted` set.
pub fn maximize_bfgs<F, A>(
    mut objective: F,
    x0: &[f64],
    h0: Matrix<f64>,
    opts: &BfgsOptions,
    mut abort: A,
) -> BfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    A: FnMut(&[f64]) -> bool,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut h = h0.clone();
    let mut iterations = 0;
    let mut reset_used = false;

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    loop {
        let gnorm = inf_norm(&g);
        if gnorm <= opts.gradient_tolerance || !f.is_finite() {
            return BfgsOutcome {
                x,
                value: f,
                gradient_inf_norm: gnorm,
                converged: f.is_finite(),
                aborted: false,
                iterations,
            };
        }
        if iterations >= opts.max_iterations {
            return BfgsOutcome {
                x,
                value: f,
                gradient_inf_norm: gnorm,
                converged: false,
                aborted: false,
                iterations,
            };
        }
        iterations += 1;

        // Ascent direction d = H g.
        for (i, d) in dir.iter_mut().enumerate() {
            *d = (0..n).map(|k| h[(i, k)] * g[k]).sum();
        }
        let mut slope = dot(&g, &dir);
        if !(slope > 0.0) {
            h = h0.clone();
            dir.copy_from_slice(&g);
            for (i, d) in dir.iter_mut().enumerate() {
                *d = (0..n).map(|k| h[(i, k)] * g[k]).sum();
            }
            slope = dot(&g, &dir);
        }
        let dmax = inf_norm(&dir);
        let mut alpha = if dmax > opts.max_step {
            opts.max_step / dmax
        } else {
            1.0
        };

        let mut accepted = false;
        let mut f_new = f;
        for _ in 0..50 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * dir[i];
            }
            f_new = objective(&x_new, &mut g_new);
            if f_new.is_finite() && f_new >= f + 1e-4 * alpha * slope {
                accepted = true;
                break;
            }
            // Near the optimum the Armijo gain drowns in rounding; accept a
            // step that keeps the value and shrinks the gradient.
            if f_new.is_finite()
                && f_new >= f - 1e-13 * f.abs().max(1.0)
                && inf_norm(&g_new) < 0.5 * gnorm
            {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            if reset_used {
                return BfgsOutcome {
                    x,
                    value: f,
                    gradient_inf_norm: gnorm,
                    converged: false,
                    aborted: false,
                    iterations,
                };
            }
            reset_used = true;
            h = h0.clone();
            continue;
        }

        // s = step, y = change in gradient of the minimization objective (-f).
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g[i] - g_new[i]).collect();
        let ys = dot(&y, &s);
        if ys > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            let rho = 1.0 / ys;
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|k| h[(i, k)] * y[k]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for k in 0..n {
                    h[(i, k)] += -rho * (hy[i] * s[k] + s[i] * hy[k])
                        + (rho * rho * yhy + rho) * s[i] * s[k];
                }
            }
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        if abort(&x) {
            return BfgsOutcome {
                gradient_inf_norm: inf_norm(&g),
                x,
                value: f,
                converged: false,
                aborted: true,
                iterations,
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // f = -(x-1)^2 - 10 (y+2)^2 - (x-1)(y+2)
        let obj = |x: &[f64], g: &mut [f64]| {
            let a = x[0] - 1.0;
            let b = x[1] + 2.0;
            g[0] = -2.0 * a - b;
            g[1] = -20.0 * b - a;
            -(a * a) - 10.0 * b * b - a * b
        };
        let out = maximize_bfgs(
            obj,
            &[0.0, 0.0],
            Matrix::identity(2),
            &BfgsOptions::default(),
            |_| false,
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6);
        assert!((out.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_valley() {
        let obj = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -(-2.0 * (1.0 - a) - 400.0 * a * (b - a * a));
            g[1] = -(200.0 * (b - a * a));
            -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        };
        let opts = BfgsOptions {
            max_iterations: 500,
            ..Default::default()
        };
        let out = maximize_bfgs(obj, &[-1.2, 1.0], Matrix::identity(2), &opts, |_| false);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn abort_predicate_stops_search() {
        // Unbounded above along x.
        let obj = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            x[0]
        };
        let out = maximize_bfgs(
            obj,
            &[0.0],
            Matrix::identity(1),
            &BfgsOptions::default(),
            |x| x[0] > 10.0,
        );
        assert!(out.aborted);
        assert!(!out.converged);
    }
}

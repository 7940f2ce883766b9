//! Independent reference implementations used to check the library.
#![allow(dead_code)]

pub mod checks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Downhill simplex minimisation.
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_iter: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[d] - values[0]).abs() <= ftol * (1.0 + values[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..d)
                .map(|j| centroid[j] + t * (simplex[d][j] - centroid[j]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
        } else if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
        } else {
            let (xc, fc) = if fr < values[d] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < values[d].min(fr) {
                simplex[d] = xc;
                values[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = (0..d)
                        .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                        .collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=d)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    (simplex[best].clone(), values[best])
}

/// Nelder–Mead from random starts, each polished by restarting the simplex
/// at its own optimum until it stops improving.
pub fn nelder_mead_restarts(
    f: &dyn Fn(&[f64]) -> f64,
    dim: usize,
    starts: usize,
    spread: f64,
    seed: u64,
) -> (Vec<f64>, f64) {
    let mut r = rng(seed);
    let mut best = (vec![0.0; dim], f(&vec![0.0; dim]));
    for s in 0..starts {
        let mut x: Vec<f64> = if s == 0 {
            vec![0.0; dim]
        } else {
            (0..dim).map(|_| r.random_range(-spread..spread)).collect()
        };
        let mut fx = f(&x);
        for _ in 0..40 {
            let (nx, nf) = nelder_mead(f, &x, 0.3, 20_000, 1e-15);
            let improved = nf < fx - 1e-13;
            x = nx;
            fx = nf;
            if !improved {
                break;
            }
        }
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Negative Bernoulli log-likelihood of a logistic model.
pub fn logistic_nll(beta: &[f64], rows: &[Vec<f64>], y: &[u8]) -> f64 {
    rows.iter()
        .zip(y)
        .map(|(x, &yi)| {
            let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            // log(1 + e^eta) − y·eta, stable for either sign
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            softplus - f64::from(yi) * eta
        })
        .sum()
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * u128::from(n - i) / u128::from(i + 1);
    }
    c
}

/// Two-sided Fisher p-value by enumerating every table with the observed
/// margins, in exact integer arithmetic.
pub fn fisher_by_enumeration(t: [[u64; 2]; 2]) -> f64 {
    let r1 = t[0][0] + t[0][1];
    let r2 = t[1][0] + t[1][1];
    let c1 = t[0][0] + t[1][0];
    let weight = |a: u64| binomial(r1, a) * binomial(r2, c1 - a);
    let observed = weight(t[0][0]);
    let lo = c1.saturating_sub(r2);
    let hi = c1.min(r1);
    let total: u128 = (lo..=hi).map(weight).sum();
    let extreme: u128 = (lo..=hi).map(weight).filter(|&w| w <= observed).sum();
    extreme as f64 / total as f64
}

/// Smallest within-cluster sum of squares over all two-part partitions.
pub fn best_two_partition_ss(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let ss = |idx: &[usize]| -> f64 {
        let d = points[0].len();
        let mean: Vec<f64> = (0..d)
            .map(|j| idx.iter().map(|&i| points[i][j]).sum::<f64>() / idx.len() as f64)
            .collect();
        idx.iter()
            .map(|&i| {
                (0..d)
                    .map(|j| (points[i][j] - mean[j]).powi(2))
                    .sum::<f64>()
            })
            .sum()
    };
    let mut best = f64::INFINITY;
    // Point 0 always in part A; every nonempty B.
    for mask in 1u32..(1 << (n - 1)) {
        let (mut a, mut b) = (vec![0], vec![]);
        for i in 1..n {
            if mask & (1 << (i - 1)) != 0 {
                b.push(i);
            } else {
                a.push(i);
            }
        }
        best = best.min(ss(&a) + ss(&b));
    }
    best
}

/// p11 of the Plackett distribution by bisection on the odds-ratio equation.
pub fn plackett_p11_bisection(p1: f64, p2: f64, psi: f64) -> f64 {
    let mut lo = (p1 + p2 - 1.0).max(0.0);
    let mut hi = p1.min(p2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let or = mid * (1.0 - p1 - p2 + mid) / ((p1 - mid) * (p2 - mid));
        if or < psi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Independent evaluation of the bivariate odds-ratio log-likelihood.
pub fn bivariate_loglik(params: &[f64], x: &[f64], t: &[u8], y1: &[u8], y2: &[u8]) -> f64 {
    let expit = |e: f64| 1.0 / (1.0 + (-e).exp());
    let mut ll = 0.0;
    for i in 0..x.len() {
        let ti = f64::from(t[i]);
        let p1 = expit(params[0] + params[1] * ti + params[2] * x[i] + params[3] * ti * x[i]);
        let p2 = expit(params[4] + params[5] * ti + params[6] * x[i] + params[7] * ti * x[i]);
        let psi = params[8].exp();
        let p11 = if (psi - 1.0).abs() < 1e-12 {
            p1 * p2
        } else {
            plackett_p11_bisection(p1, p2, psi)
        };
        let cell = match (y1[i], y2[i]) {
            (1, 1) => p11,
            (1, 0) => p1 - p11,
            (0, 1) => p2 - p11,
            _ => 1.0 - p1 - p2 + p11,
        };
        ll += cell.max(1e-300).ln();
    }
    ll
}

/// Random small trial: (x, t, y1, y2) with both arms present.
pub fn small_trial(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>, Vec<u8>, Vec<u8>) {
    let mut r = rng(seed);
    loop {
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.5..1.5)).collect();
        let t: Vec<u8> = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
        let y1: Vec<u8> = (0..n)
            .map(|i| u8::from(r.random::<f64>() < 0.35 + 0.15 * x[i] * f64::from(t[i])))
            .collect();
        let y2: Vec<u8> = (0..n)
            .map(|i| {
                let base = if y1[i] == 1 { 0.6 } else { 0.3 };
                u8::from(r.random::<f64>() < base)
            })
            .collect();
        if t.contains(&0) && t.contains(&1) {
            return (x, t, y1, y2);
        }
    }
}

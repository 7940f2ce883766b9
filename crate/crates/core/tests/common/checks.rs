//! Oracle comparisons shared by the oracle tests and the acceptance suite.
//! Each returns the worst discrepancy it saw.

use rand::Rng;
use sigtrial_core::bivglm::{biv_loglik, fit_bivariate_or, plackett_joint, BivariateData};
use sigtrial_core::clustering::kmeans;
use sigtrial_core::glm::fit_logistic;
use sigtrial_core::inference::permutation_pvalue;
use sigtrial_core::statnum::{fisher_exact, Matrix, RngStream};

use super::*;

/// Largest |β̂ − β̂_NM| over logistic fits of random designs with ≤ 25 rows.
pub fn logistic_vs_nelder_mead(cases: u64) -> f64 {
    let mut worst = 0.0_f64;
    let mut checked = 0;
    let mut seed = 0;
    while checked < cases {
        seed += 1;
        let mut r = rng(seed);
        let n = r.random_range(15..=25);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                vec![
                    1.0,
                    r.random_range(-2.0..2.0),
                    f64::from(u8::from(r.random::<bool>())),
                ]
            })
            .collect();
        let y: Vec<u8> = rows
            .iter()
            .map(|x| {
                u8::from(r.random::<f64>() < 1.0 / (1.0 + (-(0.3 + 0.8 * x[1] - 0.5 * x[2])).exp()))
            })
            .collect();
        let fit = fit_logistic(&Matrix::from_rows(&rows).unwrap(), &y).unwrap();
        if fit.diverged_or_separated {
            continue;
        }
        let (beta, _) = nelder_mead_restarts(&|b| logistic_nll(b, &rows, &y), 3, 4, 2.0, seed);
        for (a, b) in fit.coefficients.iter().zip(&beta) {
            worst = worst.max((a - b).abs());
        }
        checked += 1;
    }
    worst
}

/// Largest shortfall of the fitted bivariate log-likelihood below the
/// Nelder–Mead maximum of an independently coded likelihood (≤ 30 rows),
/// together with the largest disagreement between the two likelihood codes
/// at the fitted parameters.
pub fn bivariate_vs_nelder_mead(cases: u64) -> (f64, f64) {
    let mut worst_gap = 0.0_f64;
    let mut worst_eval = 0.0_f64;
    let mut checked = 0;
    let mut seed = 100;
    while checked < cases {
        seed += 1;
        let (x, t, y1, y2) = small_trial(30, seed);
        let data = BivariateData::new(&x, &t, &y1, &y2).unwrap();
        let fit = fit_bivariate_or(&data).unwrap();
        if fit.diverged_or_separated || !fit.converged {
            continue;
        }
        let oracle_at_fit = bivariate_loglik(&fit.params, &x, &t, &y1, &y2);
        worst_eval = worst_eval.max((oracle_at_fit - fit.loglik).abs());
        let (_, nll) =
            nelder_mead_restarts(&|p| -bivariate_loglik(p, &x, &t, &y1, &y2), 9, 3, 0.5, seed);
        worst_gap = worst_gap.max(-nll - fit.loglik);
        checked += 1;
    }
    (worst_gap, worst_eval)
}

/// Largest |p − p_enum| over every 2×2 table with total ≤ `max_total`
/// reached by a coarse grid, plus random tables.
pub fn fisher_vs_enumeration(max_total: u64) -> f64 {
    let mut worst = 0.0_f64;
    let mut check = |t: [[u64; 2]; 2]| {
        worst = worst.max((fisher_exact(t) - fisher_by_enumeration(t)).abs());
    };
    for a in 0..=max_total / 2 {
        for b in 0..=(max_total / 2 - a) {
            for c in (0..=max_total / 2).step_by(3) {
                for d in (0..=(max_total / 2 - c)).step_by(2) {
                    check([[a, b], [c, d]]);
                }
            }
        }
    }
    let mut r = rng(7);
    for _ in 0..2000 {
        let total = r.random_range(1..=max_total);
        let mut cells = [0u64; 4];
        for _ in 0..total {
            cells[r.random_range(0..4)] += 1;
        }
        check([[cells[0], cells[1]], [cells[2], cells[3]]]);
    }
    worst
}

/// Largest |within_ss − exhaustive optimum| for k = 2 on ≤ 12 points.
pub fn kmeans_vs_exhaustive(cases: u64) -> f64 {
    let mut worst = 0.0_f64;
    for case in 0..cases {
        let mut r = rng(1000 + case);
        let n = r.random_range(4..=12);
        let dim = r.random_range(1..=2);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| r.random_range(-3.0..3.0)).collect())
            .collect();
        let fit = kmeans(&points, 2, RngStream::new(case, 0)).unwrap();
        worst = worst.max((fit.within_ss - best_two_partition_ss(&points)).abs());
    }
    worst
}

/// Largest relative error of the odds ratio recovered from Plackett cells.
pub fn plackett_identity(samples: usize) -> f64 {
    let mut r = rng(11);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let p1 = r.random_range(0.001..0.999);
        let p2 = r.random_range(0.001..0.999);
        let psi = r.random_range(-6.0_f64..6.0).exp();
        let cells = plackett_joint(p1, p2, psi).unwrap();
        worst = worst.max((cells.odds_ratio() - psi).abs() / psi);
    }
    worst
}

/// Largest |ℓ(θ) − ℓ₁ − ℓ₂| at log ψ = 0, where ℓ₁, ℓ₂ are the two
/// marginal Bernoulli log-likelihoods.
pub fn independence_factorization(cases: u64) -> f64 {
    let expit = |e: f64| 1.0 / (1.0 + (-e).exp());
    let mut worst = 0.0_f64;
    for case in 0..cases {
        let (x, t, y1, y2) = small_trial(40, 5000 + case);
        let mut r = rng(case);
        let mut params: Vec<f64> = (0..9).map(|_| r.random_range(-1.5..1.5)).collect();
        params[8] = 0.0;
        let data = BivariateData::new(&x, &t, &y1, &y2).unwrap();
        let ll = biv_loglik(&params, &data).unwrap();
        let mut separate = 0.0;
        for i in 0..x.len() {
            let ti = f64::from(t[i]);
            for (o, y) in [(0, y1[i]), (4, y2[i])] {
                let p = expit(
                    params[o]
                        + params[o + 1] * ti
                        + params[o + 2] * x[i]
                        + params[o + 3] * ti * x[i],
                );
                separate += if y == 1 { p.ln() } else { (1.0 - p).ln() };
            }
        }
        worst = worst.max((ll - separate).abs());
    }
    worst
}

/// Whether every fuzzed permutation p-value lies in [1/(n+1), 1].
pub fn permutation_bounds(cases: usize) -> bool {
    let mut r = rng(3);
    (0..cases).all(|_| {
        let n = r.random_range(1..200);
        let p_star: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let p0 = match r.random_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            2 => p_star[r.random_range(0..n)],
            _ => r.random::<f64>(),
        };
        let p = permutation_pvalue(p0, &p_star).unwrap();
        p >= 1.0 / (n + 1) as f64 && p <= 1.0
    })
}

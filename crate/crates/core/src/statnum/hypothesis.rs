use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Relative slack when collecting tables "as or less probable" than observed.
const FISHER_REL_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleResult {
    pub p_value: f64,
    pub statistic: f64,
    pub degenerate: bool,
}

/// Upper tail of the standard normal, `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Two-sided pooled-variance z-test for `x1/n1` vs `x2/n2`, no continuity correction.
pub fn two_proportion_test(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<TwoSampleResult> {
    two_proportion_test_with(x1, n1, x2, n2, false)
}

/// As [`two_proportion_test`], optionally with the Yates continuity correction.
pub fn two_proportion_test_with(
    x1: u64,
    n1: u64,
    x2: u64,
    n2: u64,
    continuity_correction: bool,
) -> Result<TwoSampleResult> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(Error::InvalidInput(format!(
            "two-proportion test needs 0 <= x <= n and n >= 1, got ({x1}/{n1}, {x2}/{n2})"
        )));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Ok(TwoSampleResult {
            p_value: 1.0,
            statistic: 0.0,
            degenerate: true,
        });
    }
    let inv = 1.0 / n1f + 1.0 / n2f;
    let se = (pooled * (1.0 - pooled) * inv).sqrt();
    let diff = x1 as f64 / n1f - x2 as f64 / n2f;
    let mut abs_diff = diff.abs();
    if continuity_correction {
        abs_diff = (abs_diff - 0.5 * inv).max(0.0);
    }
    let z = abs_diff / se;
    Ok(TwoSampleResult {
        p_value: (2.0 * normal_sf(z)).min(1.0),
        statistic: z.copysign(diff),
        degenerate: false,
    })
}

/// Two-sided Fisher exact test for `[[a, b], [c, d]]`.
///
/// Sums the hypergeometric mass of every table with the observed margins whose
/// probability does not exceed the observed one (times `1 + 1e-7`).
pub fn fisher_exact(table: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = table;
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let col2 = b + d;
    let total = row1 + row2;
    if total == 0 || row1 == 0 || row2 == 0 || col1 == 0 || col2 == 0 {
        return 1.0;
    }
    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let ln_fact = |k: u64| ln_gamma(k as f64 + 1.0);
    let denom = ln_fact(total) - ln_fact(row1) - ln_fact(row2) - ln_fact(col1) - ln_fact(col2);
    let ln_prob = |x: u64| {
        -(ln_fact(x) + ln_fact(row1 - x) + ln_fact(col1 - x) + ln_fact(row2 + x - col1) + denom)
    };
    let observed = ln_prob(a);
    let threshold = observed + FISHER_REL_SLACK.ln_1p();
    let p: f64 = (lo..=hi)
        .map(ln_prob)
        .filter(|&lp| lp <= threshold)
        .map(f64::exp)
        .sum();
    p.clamp(0.0, 1.0)
}

//! k-means partitioning of risk scores with deterministic restarts and a
//! canonical labelling that gives cluster indices a fixed meaning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::statnum::RngStream;

pub const N_RESTARTS: u64 = 20;
pub const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult<T> {
    /// Raw cluster index (0-based) per point.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    pub within_ss: T,
    pub n_iterations: usize,
    /// Within-cluster sum of squares after each Lloyd sweep of the kept restart.
    pub ss_history: Vec<T>,
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Scalar>(p: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn within_ss<T: Scalar>(points: &[Vec<T>], assignment: &[usize], centroids: &[Vec<T>]) -> T {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

fn seed_plus_plus<T: Scalar, R: Rng>(points: &[Vec<T>], k: usize, rng: &mut R) -> Vec<Vec<T>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centroids[0]).to_f64_lossy())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 && total.is_finite() {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[idx]).to_f64_lossy());
        }
    }
    centroids
}

fn update_centroids<T: Scalar>(
    points: &[Vec<T>],
    assignment: &[usize],
    centroids: &mut [Vec<T>],
) -> Vec<usize> {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![T::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, &v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let m = T::from_usize_lossy(counts[c]);
            for (dst, s) in centroids[c].iter_mut().zip(&sums[c]) {
                *dst = *s / m;
            }
        }
    }
    counts
}

/// Moves the farthest member of the largest cluster into each empty cluster.
fn repair_empty<T: Scalar>(points: &[Vec<T>], assignment: &mut [usize], centroids: &mut [Vec<T>]) {
    loop {
        let k = centroids.len();
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = (0..k).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
        if counts[largest] < 2 {
            return;
        }
        let mut far = (usize::MAX, T::neg_infinity());
        for (i, p) in points.iter().enumerate() {
            if assignment[i] == largest {
                let d = sq_dist(p, &centroids[largest]);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        assignment[far.0] = empty;
        centroids[empty] = points[far.0].clone();
        update_centroids(points, assignment, centroids);
    }
}

fn lloyd<T: Scalar>(points: &[Vec<T>], mut centroids: Vec<Vec<T>>) -> KmeansResult<T> {
    let n = points.len();
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        update_centroids(points, &assignment, &mut centroids);
        repair_empty(points, &mut assignment, &mut centroids);
        history.push(within_ss(points, &assignment, &centroids));
        if !changed {
            break;
        }
    }
    KmeansResult {
        within_ss: within_ss(points, &assignment, &centroids),
        assignment,
        centroids,
        n_iterations: iterations,
        ss_history: history,
    }
}

/// Lloyd k-means from k-means++ seeds, best of [`N_RESTARTS`] restarts.
///
/// Restart `i` draws from `rng.substream(i)`; ties in the final
/// within-cluster sum of squares go to the lowest restart index.
pub fn kmeans<T: Scalar>(points: &[Vec<T>], k: usize, rng: RngStream) -> Result<KmeansResult<T>> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::TooFewPoints { n, k });
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput(
            "points must share a positive dimension".into(),
        ));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("points must be finite".into()));
    }
    let mut best: Option<KmeansResult<T>> = None;
    for restart in 0..N_RESTARTS {
        let mut r = rng.substream(restart).rng();
        let seeds = seed_plus_plus(points, k, &mut r);
        let result = lloyd(points, seeds);
        if best.as_ref().is_none_or(|b| result.within_ss < b.within_ss) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Raw-index → canonical-index map (canonical indices are 1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalLabels {
    pub mapping: Vec<usize>,
}

impl CanonicalLabels {
    pub fn apply(&self, raw: &[usize]) -> Vec<usize> {
        raw.iter().map(|&r| self.mapping[r]).collect()
    }
}

fn order_by_sum<T: Scalar>(centroids: &[Vec<T>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..centroids.len()).collect();
    let key = |c: &Vec<T>| (c.iter().copied().sum::<T>(), c[0]);
    idx.sort_by(|&a, &b| {
        let (sa, fa) = key(&centroids[a]);
        let (sb, fb) = key(&centroids[b]);
        sa.partial_cmp(&sb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(fa.partial_cmp(&fb).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    let mut mapping = vec![0; centroids.len()];
    for (rank, &raw) in idx.iter().enumerate() {
        mapping[raw] = rank + 1;
    }
    mapping
}

/// Indices of the two centroids with the larger coordinate `dim`.
fn high_in_dim<T: Scalar>(centroids: &[Vec<T>], dim: usize) -> [bool; 4] {
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&a, &b| {
        centroids[a][dim]
            .partial_cmp(&centroids[b][dim])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut high = [false; 4];
    high[idx[2]] = true;
    high[idx[3]] = true;
    high
}

/// Canonical labels for `k ∈ {2, 4}` centroids.
///
/// * k = 2: label 2 is the centroid with the larger coordinate sum.
/// * k = 4: per dimension the two larger centroids are "high"; labels are
///   1 = (low, low), 2 = (low, high), 3 = (high, low), 4 = (high, high). When
///   that map is not a bijection the centroids are ranked by (sum, first
///   coordinate) instead.
pub fn canonicalize<T: Scalar>(centroids: &[Vec<T>]) -> Result<CanonicalLabels> {
    match centroids.len() {
        2 => Ok(CanonicalLabels {
            mapping: order_by_sum(centroids),
        }),
        4 => {
            if centroids.iter().any(|c| c.len() != 2) {
                return Err(Error::InvalidInput(
                    "k = 4 requires two-dimensional centroids".into(),
                ));
            }
            let h1 = high_in_dim(centroids, 0);
            let h2 = high_in_dim(centroids, 1);
            let mapping: Vec<usize> = (0..4)
                .map(|c| 1 + 2 * usize::from(h1[c]) + usize::from(h2[c]))
                .collect();
            let mut seen = [false; 5];
            for &m in &mapping {
                seen[m] = true;
            }
            if seen[1..].iter().all(|&s| s) {
                Ok(CanonicalLabels { mapping })
            } else {
                Ok(CanonicalLabels {
                    mapping: order_by_sum(centroids),
                })
            }
        }
        k => Err(Error::InvalidInput(format!(
            "canonical labels need k = 2 or 4, got {k}"
        ))),
    }
}

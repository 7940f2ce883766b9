use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, Matrix};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Equicorrelated covariance `variance·[(1−correlation)·I + correlation·J]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub dim: usize,
    pub variance: f64,
    pub correlation: f64,
}

impl CovarianceSpec {
    pub fn new(dim: usize, variance: f64, correlation: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "covariance dimension must be positive".into(),
            ));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "variance must be positive, got {variance}"
            )));
        }
        if !(0.0..1.0).contains(&correlation) {
            return Err(Error::InvalidInput(format!(
                "correlation must lie in [0, 1), got {correlation}"
            )));
        }
        Ok(Self {
            dim,
            variance,
            correlation,
        })
    }

    pub fn matrix<T: Scalar>(&self) -> Matrix<T> {
        let v = T::lit(self.variance);
        let off = T::lit(self.variance * self.correlation);
        Matrix::from_fn(self.dim, self.dim, |i, j| if i == j { v } else { off })
    }

    pub fn cholesky<T: Scalar>(&self) -> Result<Matrix<T>> {
        cholesky(&self.matrix())
    }
}

/// One draw of `mean + L·z`, `z` i.i.d. standard normal from `rng`.
pub fn mvn_sample<T, R>(mean: &[T], chol_factor: &Matrix<T>, rng: &mut R) -> Result<Vec<T>>
where
    T: Scalar,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let d = mean.len();
    if chol_factor.rows() != d || chol_factor.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: chol_factor.rows().max(chol_factor.cols()),
        });
    }
    let z: Vec<T> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = mean.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let row = chol_factor.row(i);
        for k in 0..=i {
            *o += row[k] * z[k];
        }
    }
    Ok(out)
}

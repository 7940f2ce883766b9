//! Numerical and statistical primitives: dense linear algebra for covariance
//! factorization, multivariate normal sampling, exact and asymptotic
//! two-sample tests, and the deterministic random stream contract.

mod hypothesis;
mod linalg;
mod mvn;
mod rng;

pub use hypothesis::{
    fisher_exact, normal_sf, two_proportion_test, two_proportion_test_with, TwoSampleResult,
};
pub use linalg::{cholesky, cholesky_inverse, cholesky_solve, Matrix};
pub use mvn::{mvn_sample, CovarianceSpec};
pub use rng::RngStream;

//! Cross-validated bivariate risk scores for two-outcome adaptive signature
//! designs, with the simulation machinery to measure their operating
//! characteristics.
//!
//! Numerical building blocks are generic over [`Scalar`]; the trial-level
//! pipeline works in `f64`.

// `!(x > 0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bivglm;
pub mod campaign;
pub mod clustering;
pub mod config;
pub mod dataio;
pub mod error;
pub mod glm;
pub mod inference;
pub mod num;
pub mod opchar;
pub mod optim;
pub mod scores;
pub mod simengine;
pub mod statnum;

pub use error::{Error, Result};
pub use num::Scalar;

/// Default working precision.
pub type Real = f64;
pub type RealMatrix = statnum::Matrix<Real>;
pub type LogisticFit = glm::LogisticFit<Real>;
pub type KmeansResult = clustering::KmeansResult<Real>;
pub type JointCellProbs = bivglm::JointCellProbs<Real>;

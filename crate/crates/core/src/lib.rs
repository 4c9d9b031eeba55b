//! Robust high-dimensional factor analysis: PCA factor estimation, robust
//! and structured covariance estimation, factor-adjusted multiple testing
//! and model selection, sketched principal component regression, and
//! spectral methods for mixtures, networks, matrix completion and phase
//! synchronization.
//!
//! Data matrices are `p × n` throughout: rows are variables, columns are
//! observations.

pub mod error;
pub mod linalg;
pub mod robust;
pub mod factor;
pub mod covest;
pub mod pcr;
pub mod normal;
pub mod farmtest;
pub mod farmselect;
pub mod gmm;
pub mod spectral;
pub mod datagen;

pub use error::{FarmError, Result};
pub use linalg::{Matrix, Vector};

//! Sparse + low-rank approximation of softmax attention.
//!
//! The library pairs a positive random-feature (low-rank) estimate of
//! `exp(QKᵀ)` with a sparse correction on locality-sensitive-hash collisions.
//! On the collision support the correction subtracts the low-rank estimate and
//! adds back the exact value, so the combined matrix is exact there and equal
//! to the low-rank estimate elsewhere. Neither the low-rank product nor the
//! exact attention matrix is materialized on the fast path.
//!
//! Alongside the estimator the crate carries what is needed to check it:
//! exact attention, decomposition oracles (top-k, truncated SVD, robust PCA,
//! Taylor low-rank), synthetic attention generators, and Monte-Carlo
//! estimator statistics.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the experiment runner uses.

pub mod alloc_track;
pub mod analysis;
pub mod approx;
pub mod attention;
pub mod error;
pub mod features;
pub mod genmodel;
pub mod io;
pub mod linalg;
pub mod lsh;
pub mod matrix;
pub mod oracles;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use scalar::Real;

/// Row-major `f64` matrix.
pub type Matrix = matrix::DenseMatrix<f64>;
/// Row-major `f32` matrix.
pub type Matrix32 = matrix::DenseMatrix<f32>;
pub type Batch = attention::AttentionBatch<f64>;
pub type Features = features::FeatureMap<f64>;
pub type Factors = features::LowRankFactors<f64>;
pub type Hashing = lsh::HashFamily<f64>;
pub type Correction = lsh::SparseCorrection<f64>;
pub type Output = approx::ApproxOutput<f64>;
pub type Run = approx::ScatterbrainRun<f64>;

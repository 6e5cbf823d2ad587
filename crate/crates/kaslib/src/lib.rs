//! Gradient-based parameter-space dimension reduction: classic active
//! subspaces and their kernel-based extension via random Fourier features,
//! with Gaussian-process response surfaces over the reduced coordinates and
//! a cross-validated tuning loop for the spectral measure.
//!
//! Modules:
//! - [`numerics`]: eigendecomposition, SVD, pseudoinverse, Cholesky solves.
//! - [`datasets`]: input specs, gradient datasets, sampling, folds, CSV I/O.
//! - [`featuremap`]: random Fourier / sigmoid feature maps and gradient lifts.
//! - [`subspace`]: gradient covariances and active/inactive subspaces.
//! - [`gpr`]: RBF Gaussian-process regression and RRMSE scoring.
//! - [`tuning`]: log-grid search over spectral-measure hyperparameters.
//! - [`benchmarks`]: analytic test problems with exact gradients.
//! - [`pipeline`]: end-to-end surrogate construction and AS/KAS comparison.

// Negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN,
// which the clippy-suggested `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod datasets;
pub mod error;
pub mod featuremap;
pub mod gpr;
pub mod numerics;
pub mod pipeline;
pub mod subspace;
pub mod tuning;

pub use error::{Error, Result};

//! Frequency-domain loss alignment for multivariate forecasting.
//!
//! The crate bundles four groups of functionality:
//!
//! - [`data`]: CSV ingestion, chronological splits, z-scoring and sliding windows.
//! - [`transforms`], [`entropy`], [`theorem`]: the DFT / Haar transforms, histogram
//!   entropy estimators and a numerical check that a unitary map can lower the
//!   marginal entropy of correlated Gaussian channels.
//! - [`loss`] and [`forecaster`]: the channel/temporal frequency loss with analytic
//!   gradients, and a small linear forecaster trained against it.
//! - [`analysis`]: per-band spectral errors and residual-on-residual causal
//!   correlation estimates.

// `!(x > 0.0)` is how argument checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod entropy;
pub mod error;
pub mod forecaster;
pub mod loss;
pub mod theorem;
pub mod transforms;

pub use error::{OlmaError, Result};

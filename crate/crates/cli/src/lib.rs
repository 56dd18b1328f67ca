//! Command-line experiments for the frequency-domain alignment loss: entropy
//! scans, the unitary-path check, training and evaluation of a linear
//! forecaster, spectral band errors, causal matrices, ablations and weight
//! sweeps.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod pipeline;
pub mod synthetic;

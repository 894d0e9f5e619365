//! Comparison models: a generic feed-forward network and linear system
//! identification on hand-derived features.

mod ffnn;
mod si;

pub use ffnn::{FfnnConfig, FfnnLossGraph, FfnnParams, FfnnTrainer};
pub use si::{beta_true, si_features, si_fit, SiFit, SiModel, SolveMethod, FEATURE_DIM, RIDGE};

//! Multi-label 12-lead ECG arrhythmia classification: a residual 1D-CNN
//! trained from scratch on a small reverse-mode autodiff core, a multi-label
//! metric suite, expert-feature baselines and expected-gradients attribution.

pub mod baseline;
pub mod data;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod seed;
mod svg;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

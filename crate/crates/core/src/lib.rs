//! Robust Bayesian bias adjustment for binary-outcome meta-analysis.
//!
//! The crate fits a hierarchical random-effects model in which each study's
//! contribution to the pooled effect is tempered by a quality weight
//! `q_i` in `(0, 1]` derived from risk-of-bias assessments, enumerates the
//! set of quality vectors consistent with those assessments, and reports
//! bounds (minimum and maximum over that set) for every posterior summary
//! of interest — a sensitivity analysis that asks how much the conclusions
//! of the meta-analysis could move under any defensible bias adjustment.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod ingest;
pub mod model;
pub mod persist;
pub mod quality;
pub mod report;
pub mod rng;
pub mod robust;
pub mod sampler;
pub mod summary;

pub use error::{Error, Result};

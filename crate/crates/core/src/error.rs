//! Error type shared across the library.
//!
//! Every variant carries a human-readable, module-qualified message so that
//! failures surfaced by the CLI point at the subsystem that produced them.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid data, parameters, or a link-function domain violation.
    #[error("model: {0}")]
    Model(String),
    /// Invalid MCMC settings or a sampler configuration problem.
    #[error("sampler: {0}")]
    Sampler(String),
    /// Invalid risk-of-bias input, cutoff policy, or quality-set specification.
    #[error("quality: {0}")]
    Quality(String),
    /// Bound-search orchestration failure.
    #[error("robust: {0}")]
    Robust(String),
    /// Invalid or incomplete run configuration.
    #[error("config: {0}")]
    Config(String),
    /// File ingestion, persistence, or rendering I/O failure.
    #[error("io: {0}")]
    Io(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Validation errors name the
//! offending field and location so callers can surface actionable messages;
//! numeric failures (degenerate data, unstable bootstraps) are distinct
//! variants so front ends can map them to different exit codes.

use thiserror::Error;

/// Errors produced by dataset validation, policy construction, the solver,
/// and the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Array shapes do not line up; the message names both sides.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A NaN or infinity where a finite value is required.
    #[error("non-finite value in {field} at {location}")]
    NonFinite {
        field: &'static str,
        location: String,
    },

    /// The dataset is structurally unusable (too few rows, no covariates, ...).
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A policy whose pieces do not partition the real line, or with an
    /// invalid slope or negative tau.
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    /// A weight vector violating nonnegativity or the sum-to-n constraint.
    #[error("infeasible weights: {0}")]
    InfeasibleWeights(String),

    /// Kernel bandwidth must be strictly positive.
    #[error("bandwidth must be strictly positive, got {0}")]
    NonPositiveBandwidth(f64),

    /// The median pairwise distance is zero, so no usable bandwidth exists.
    #[error("degenerate pairwise distances: median distance is zero")]
    DegenerateBandwidth,

    /// Data degenerate for the requested computation (e.g. all rows identical).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Invalid solver configuration (negative lambda, cap below one, ...).
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),

    /// `predict` called on an outcome model that has not been fitted.
    #[error("outcome model used before fit")]
    ModelNotFitted,

    /// Influence values whose mean is too far from zero for the supplied
    /// point estimate, indicating mismatched inputs.
    #[error("inconsistent influence inputs: {0}")]
    InconsistentInfluence(String),

    /// Invalid bootstrap configuration (too few replications, bad level).
    #[error("invalid bootstrap configuration: {0}")]
    InvalidBootstrap(String),

    /// Too many bootstrap replications failed to converge.
    #[error("bootstrap unstable: {failed} of {total} replications failed")]
    BootstrapUnstable { failed: usize, total: usize },

    /// Confidence level outside the open unit interval.
    #[error("invalid confidence level {0}: must lie strictly between 0 and 1")]
    InvalidLevel(f64),

    /// Ranking requires at least two candidate weightings.
    #[error("need at least two candidate weightings to rank, got {0}")]
    TooFewCandidates(usize),

    /// A named candidate weighting failed the feasibility check.
    #[error("candidate '{label}' is infeasible: {reason}")]
    InfeasibleCandidate { label: String, reason: String },

    /// Invalid simulation specification.
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    /// Underlying CSV parse or write failure.
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    /// Underlying I/O failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Underlying JSON parse or write failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

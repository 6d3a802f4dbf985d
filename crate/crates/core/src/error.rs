use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state space must contain at least one non-error state")]
    EmptyStateSpace,
    #[error("empty label")]
    EmptyLabel,
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("state `{0}` has no samples in the contingency matrix")]
    ZeroRowTotal(String),
    #[error("negative count {count} at line {line}")]
    NegativeCount { line: usize, count: String },
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("subdistribution mass {0:e} is too small to normalize")]
    VanishingMass(f64),
    #[error("invalid chain: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidChain(Vec<Violation>),
    #[error("invalid summary: {0}")]
    InvalidSummary(String),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("scenario sequence must be non-empty")]
    EmptySequence,
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("missing abstraction for environment `{0}`")]
    MissingEnvironment(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition is infeasible over the probability simplex")]
    VacuousPrecondition,
    #[error("premise {index} failed: {reason}")]
    PremiseFailed {
        index: usize,
        reason: String,
        counterexample: Vec<f64>,
    },
    #[error("{count} interleavings exceed the enumeration budget of {budget}")]
    BudgetExceeded { count: u128, budget: u128 },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("{}: {cause}", path.display())]
    Json { path: PathBuf, cause: serde_json::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, cause: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            cause,
        }
    }
}

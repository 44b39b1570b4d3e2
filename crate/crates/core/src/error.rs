use thiserror::Error;

/// Errors raised by the toolkit's numerical and data operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm vector: {0}")]
    ZeroNorm(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label out of range: {label} >= {classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{0}")]
    Constraint(String),

    #[error("single-class input: both target and nontarget trials are required")]
    SingleClass,

    #[error("zero variance among top cohort scores (mean {mean})")]
    ZeroVariance { mean: f64 },

    #[error("cohort too small: {available} members, {required} required")]
    CohortTooSmall { available: usize, required: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("missing {kind} `{id}`")]
    Missing { kind: &'static str, id: String },

    #[error("trial-id mismatch: {0}")]
    TrialMismatch(String),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed inputs or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroNorm(_)
                | Error::NonFinite(_)
                | Error::ZeroVariance { .. }
                | Error::Degenerate(_)
                | Error::NotPositiveDefinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

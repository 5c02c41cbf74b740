use thiserror::Error;

/// Errors raised anywhere in the spectroscopy pipeline.
///
/// The variants are grouped by the exit-code class the CLI maps them to:
/// configuration problems, data problems and numerical failures.
#[derive(Debug, Error)]
pub enum QnsError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("ARMA filter is unstable: {0}")]
    Unstable(String),

    #[error("delay {delay_s:e} s is not an integer multiple of the step {dt_s:e} s")]
    DelayOffGrid { delay_s: f64, dt_s: f64 },

    #[error("order k = {k} outside the allowed range {min}..={max}")]
    OrderOutOfRange { k: usize, min: usize, max: usize },

    #[error("mismatched total time: {0:e} s vs {1:e} s")]
    MismatchedDuration(f64, f64),

    #[error("trajectory has {got} steps but the sequence needs {expected}")]
    TrajectoryLength { expected: usize, got: usize },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error("reconstruction system is rank deficient (rank {rank} of {cols}); null space dominated by block {block}")]
    RankDeficient { rank: usize, cols: usize, block: String },

    #[error("confusion matrix is singular or nearly so (condition {condition:e})")]
    SingularConfusion { condition: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QnsError>;

impl QnsError {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        QnsError::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            QnsError::InvalidParameter { .. }
            | QnsError::Unstable(_)
            | QnsError::DelayOffGrid { .. }
            | QnsError::OrderOutOfRange { .. }
            | QnsError::MismatchedDuration(..) => ErrorKind::Config,
            QnsError::TrajectoryLength { .. }
            | QnsError::MissingData(_)
            | QnsError::MalformedRecord(_)
            | QnsError::Io(_)
            | QnsError::Json(_) => ErrorKind::Data,
            QnsError::RankDeficient { .. }
            | QnsError::SingularConfusion { .. }
            | QnsError::Numerical(_) => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

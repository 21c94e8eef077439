use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("concept space needs at least one label")]
    EmptySpace,
    #[error("blank genre label at axis {0}")]
    BlankLabel(usize),
    #[error("duplicate genre label {0:?}")]
    DuplicateLabel(String),
    #[error("unknown genre label {label:?} ({context})")]
    UnknownGenre { label: String, context: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine distance undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("snapshot instant list is empty")]
    EmptyInstants,
    #[error("snapshot instants must be strictly increasing (index {0})")]
    InstantsNotIncreasing(usize),
    #[error("need at least {needed} observations, found {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("length mismatch: {what} has {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("innovation covariance is numerically singular (condition estimate {0:e})")]
    SingularInnovation(f64),
    #[error("covariance lost positive semi-definiteness at step {0}; filter diverged")]
    Divergence(usize),
    #[error("{path}: line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

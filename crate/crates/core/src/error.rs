use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("row {row}: event indicator inconsistent with observed time and horizon")]
    DeltaTimeMismatch { row: usize },

    #[error("row {row}: negative observed time")]
    NegativeTime { row: usize },

    #[error("row {row}: event indicator must be 0 or 1, got `{value}`")]
    InvalidDelta { row: usize, value: String },

    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("no treatment-initiation events in the data")]
    NoEvents,

    #[error("degenerate design matrix (condition number {condition:.3e})")]
    DegenerateDesign { condition: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("theta must be strictly positive")]
    NonPositiveTheta,

    #[error("invalid theta specification: {0}")]
    InvalidTheta(String),

    #[error("case weights must be finite and strictly positive (index {index})")]
    InvalidWeights { index: usize },

    #[error("weight for record {index} is not positive and finite")]
    DegenerateWeight { index: usize },

    #[error("Cox fit did not converge")]
    NotConverged,

    #[error("negative time in evaluation grid")]
    NegativeGridTime,

    #[error("quadrature did not reach the requested tolerance (estimate {value}, error {error:e})")]
    QuadratureNonConvergence { value: f64, error: f64 },

    #[error("too few usable bootstrap replicates ({kept})")]
    TooFewReplicates { kept: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonFinite { .. } => "NonFinite",
            Error::DeltaTimeMismatch { .. } => "DeltaTimeMismatch",
            Error::NegativeTime { .. } => "NegativeTime",
            Error::InvalidDelta { .. } => "InvalidDelta",
            Error::Parse { .. } => "Parse",
            Error::InvalidDataset(_) => "InvalidDataset",
            Error::NoEvents => "NoEvents",
            Error::DegenerateDesign { .. } => "DegenerateDesign",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonPositiveTheta => "NonPositiveTheta",
            Error::InvalidTheta(_) => "InvalidTheta",
            Error::InvalidWeights { .. } => "InvalidWeights",
            Error::DegenerateWeight { .. } => "DegenerateWeight",
            Error::NotConverged => "NotConverged",
            Error::NegativeGridTime => "NegativeGridTime",
            Error::QuadratureNonConvergence { .. } => "QuadratureNonConvergence",
            Error::TooFewReplicates { .. } => "TooFewReplicates",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Csv(_) => "Csv",
            Error::Io(_) => "Io",
        }
    }
}

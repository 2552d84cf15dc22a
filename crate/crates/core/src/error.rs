use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported cumulant order {0}: orders 1 through 4 are supported")]
    UnsupportedOrder(usize),

    #[error("incomplete moments: no joint moment supplied for block {0:?}")]
    IncompleteMoments(Vec<usize>),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("nonstationary model: {0}")]
    NonStationary(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("collinear regressors: {0}")]
    Collinearity(String),

    #[error("propagation error: {0}")]
    Propagation(String),

    #[error("frequency constraint violated: {0}")]
    FrequencyConstraint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("hypothesis error: {0}")]
    Hypothesis(String),

    #[error("degenerate weighting matrix (largest eigenvalue {0:e})")]
    DegenerateWeighting(f64),

    #[error("insufficient replicates: got {got}, need at least {need}")]
    InsufficientReplicates { got: usize, need: usize },

    #[error("covariance error: {0}")]
    Covariance(String),

    #[error("replicate failure after {attempts} attempts: {reason}")]
    ReplicateFailure { attempts: usize, reason: String },

    #[error("ingestion error at line {line}: {reason}")]
    Ingestion { line: usize, reason: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Ingestion { .. } | Error::Io(_) | Error::Json(_) => 3,
            Error::Validation(_)
            | Error::Config(_)
            | Error::Hypothesis(_)
            | Error::Model(_)
            | Error::NonStationary(_)
            | Error::UnsupportedOrder(_)
            | Error::Shape(_)
            | Error::Data(_)
            | Error::FrequencyConstraint(_)
            | Error::IncompleteMoments(_)
            | Error::InsufficientReplicates { .. } => 2,
            Error::Collinearity(_)
            | Error::Propagation(_)
            | Error::DegenerateWeighting(_)
            | Error::Covariance(_)
            | Error::ReplicateFailure { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

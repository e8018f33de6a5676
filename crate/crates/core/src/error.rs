use thiserror::Error;

pub type Result<T, E = ScceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ScceError {
    #[error("invalid upper-triangular index (s={s}, t={t}) for dimension {k}")]
    InvalidIndex { s: usize, t: usize, k: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid block model: {0}")]
    InvalidSpec(String),

    #[error("community {0} has no members")]
    EmptyCommunity(usize),

    #[error("edge probability {probability} exceeds 1 at layer {layer}, nodes ({i}, {j})")]
    ProbabilityOutOfRange {
        layer: usize,
        i: usize,
        j: usize,
        probability: f64,
    },

    #[error("symmetric eigensolver did not converge on a {dim}x{dim} matrix within {max_iterations} iterations")]
    EigenNonConvergence { dim: usize, max_iterations: usize },

    #[error("alignment undefined: cross-product U^T Uhat is rank deficient (smallest singular value {smallest_singular_value:e})")]
    RankDeficientAlignment { smallest_singular_value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ground truth required: {0}")]
    MissingGroundTruth(String),

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ScceError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScceError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

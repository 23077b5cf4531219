use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid control field: {0}")]
    InvalidField(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duration mismatch: problem T = {expected}, field T = {got}")]
    DurationMismatch { expected: f64, got: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("rank {rank} exceeds dimension {dim}")]
    RankTooLarge { rank: usize, dim: usize },

    #[error("spectrum has no null classification")]
    Unclassified,

    #[error("eigenvector {0} lies in the null subspace")]
    NullIndex(usize),

    #[error("eigenvalue {0} is degenerate; eigenvector pairing undefined")]
    Degenerate(usize),

    #[error("null subspace has dimension {0}, expected exactly 1")]
    NullDimension(usize),

    #[error("direction vector has zero length")]
    ZeroDirection,

    #[error("start point is not a solution: infidelity {infidelity:e} >= {threshold:e}")]
    NotASolution { infidelity: f64, threshold: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidField(_) => "invalid_field",
            Error::InvalidProblem(_) => "invalid_problem",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DurationMismatch { .. } => "duration_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::NoConvergence(_) => "no_convergence",
            Error::RankTooLarge { .. } => "rank_too_large",
            Error::Unclassified => "unclassified",
            Error::NullIndex(_) => "null_index",
            Error::Degenerate(_) => "degenerate",
            Error::NullDimension(_) => "null_dimension",
            Error::ZeroDirection => "zero_direction",
            Error::NotASolution { .. } => "not_a_solution",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

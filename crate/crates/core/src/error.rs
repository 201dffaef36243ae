use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ambient dimension {0} outside the supported range 2..=32")]
    InvalidDimension(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("affine intersection is empty")]
    EmptyIntersection,

    #[error("hyperplane arrangement is singular (rank {rank} < {dim})")]
    SingularArrangement { rank: usize, dim: usize },

    #[error("no solution for the preimage base point")]
    NoSolution,

    #[error("output is not reachable: preimage is empty")]
    EmptyPreimage,

    #[error("output has a negative component at index {0}")]
    NegativeOutput(usize),

    #[error("rejection sampling exhausted ({accepted} accepted out of {draws} draws)")]
    SamplingExhausted { accepted: usize, draws: usize },

    #[error("layer is not circulant")]
    NotCirculant,

    #[error("apex at infinity: kernel row sum {row_sum} is zero")]
    ApexAtInfinity { row_sum: f64 },

    #[error("piece budget of {budget} exceeded")]
    PieceBudgetExceeded { budget: usize },

    #[error("unsupported projection: {0}")]
    UnsupportedProjection(String),

    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by a malformed scenario configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

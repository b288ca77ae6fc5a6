use thiserror::Error;

pub type Result<T, E = ReadoutError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("qubit index {qubit} out of range for a {n}-qubit register")]
    QubitOutOfRange { qubit: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),

    #[error("euler step produced probability {value:e} below tolerance; reduce dt")]
    StepTooLarge { value: f64 },

    #[error("trajectory diverged at t = {time}: {detail}")]
    NonFinite { time: f64, detail: String },

    #[error("enumeration over {dim}! permutations exceeds the cap of 8!")]
    EnumerationCap { dim: usize },

    #[error("infidelity is zero; the log-infidelity rate is singular")]
    SingularRate,

    #[error("epsilon {0:e} is not present in the ensemble grid")]
    MissingEpsilon(f64),

    #[error("epsilon {epsilon:e} is censored in {fraction:.4} of trajectories")]
    Censored { epsilon: f64, fraction: f64 },

    #[error("regression is ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ReadoutError {
    /// Configuration problems are reported with exit code 1, everything else with 2.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ReadoutError::Config { .. }
                | ReadoutError::InvalidParams(_)
                | ReadoutError::InvalidPermutation(_)
                | ReadoutError::DimensionMismatch { .. }
                | ReadoutError::EnumerationCap { .. }
        )
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; `path` names the offending field.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("numerical divergence: component {component} became {value}")]
    NumericalDivergence { component: usize, value: f64 },

    #[error("estimator degenerate: innovation covariance is singular (check R)")]
    EstimatorDegenerate,

    #[error("linearization failed: non-finite Jacobian entry at ({row}, {col})")]
    LinearizationFailure { row: usize, col: usize },

    #[error("rate infeasible: bit period {period_s} s is shorter than {min_period_s} s")]
    RateInfeasible { period_s: f64, min_period_s: f64 },

    #[error("capacity exceeded: {requested} bits requested, at most {max_bits} fit")]
    CapacityExceeded { requested: usize, max_bits: usize },

    #[error("target unreachable: {0}")]
    Unreachable(String),

    #[error("empty trace")]
    EmptyTrace,

    #[error("trace too short: {len} samples, need at least {required}")]
    TraceTooShort { len: usize, required: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no preamble found")]
    NoPreamble,

    #[error("CRC mismatch (expected {expected:#04x}, got {got:#04x})")]
    CrcMismatch {
        expected: u8,
        got: u8,
        /// Best-effort payload recovered despite the failed check.
        payload: Vec<u8>,
    },

    #[error("undefined noise floor: no frames outside encoding windows")]
    UndefinedNoiseFloor,

    #[error("invalid sweep axis `{0}`")]
    InvalidAxis(String),

    #[error("empty result set: {0}")]
    EmptyResults(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Dimension { .. } | Error::InvalidAxis(_) | Error::Parse(_) => 2,
            Error::RateInfeasible { .. } | Error::CapacityExceeded { .. } | Error::Unreachable(_) => 3,
            Error::NoPreamble | Error::CrcMismatch { .. } => 4,
            _ => 1,
        }
    }
}

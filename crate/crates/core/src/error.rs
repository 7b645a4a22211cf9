use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("domain error at line {line}: {msg}")]
    Domain { line: usize, msg: String },

    #[error("sequencing error at line {line}: expected t = {expected}, found {found}")]
    Sequencing {
        line: usize,
        expected: usize,
        found: String,
    },

    #[error("time index {t} is out of range (burn-in {burn_in}, series length {len})")]
    OutOfRange { t: usize, burn_in: usize, len: usize },

    #[error("empty regression frame: series has {len} blocks but burn-in is {burn_in}")]
    EmptyFrame { len: usize, burn_in: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data for online CV: {0}")]
    InsufficientData(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("fluctuation diverged: {0}")]
    Divergence(String),

    #[error("positivity violation at t = {t}, node {node}: probability {prob} below bound {delta}")]
    Positivity {
        t: usize,
        node: usize,
        prob: f64,
        delta: f64,
    },

    #[error("learner `{learner}` failed: {msg}")]
    Learner { learner: String, msg: String },

    #[error("every learner in the library failed")]
    AllLearnersFailed,

    #[error("scenario `{scenario}`: {failed} of {draws} draws failed, above the 5% budget")]
    TooManyFailures {
        scenario: String,
        failed: usize,
        draws: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Domain { .. }
            | Error::Sequencing { .. }
            | Error::OutOfRange { .. }
            | Error::EmptyFrame { .. }
            | Error::Dimension { .. }
            | Error::InsufficientData(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::NonConvergence { .. }
            | Error::Divergence(_)
            | Error::Positivity { .. }
            | Error::Learner { .. }
            | Error::AllLearnersFailed
            | Error::TooManyFailures { .. } => ErrorKind::Numerical,
        }
    }
}

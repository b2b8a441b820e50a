use thiserror::Error;

/// Everything that can go wrong while building, certifying or running a problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("diagonal dominance fails: margin {margin} at row {row} (x = {x:?})")]
    DominanceViolated {
        margin: f64,
        row: usize,
        x: Vec<f64>,
    },

    #[error("Slater condition fails: {0}")]
    SlaterViolated(String),

    #[error("inadmissible step size: {0}")]
    StepSize(String),

    #[error("Hessian enclosure is unbounded or non-finite")]
    UnboundedHessian,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("minimizer lies outside the box (component {index}: {value})")]
    BoxTooSmall { index: usize, value: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("envelope undefined: {0}")]
    EnvelopeUndefined(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

use thiserror::Error;

/// Errors produced by the decomposition library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("singular design in mode {mode}, row {row}")]
    SingularRow { mode: usize, row: usize },
    #[error("column {column} of mode {mode} collapsed to zero")]
    DegenerateColumn { mode: usize, column: usize },
    #[error("every line-search point violates the max-norm bound")]
    AllInfeasible,
    #[error("slab {index} of mode {mode} has no observed cells")]
    EmptySlab { mode: usize, index: usize },
    #[error("start {start} failed: {source}")]
    StartFailed {
        start: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("all {attempts} initializations failed; last error: {last}")]
    AllStartsFailed { attempts: usize, last: Box<Error> },
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerical routines as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularDesign
            | Error::NonFinite(_)
            | Error::SingularRow { .. }
            | Error::DegenerateColumn { .. }
            | Error::AllInfeasible
            | Error::AllStartsFailed { .. } => true,
            Error::StartFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

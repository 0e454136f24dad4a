use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("underdetermined system: n = {n} must exceed p = {p}")]
    Underdetermined { n: usize, p: usize },
    #[error("matrix is numerically singular (smallest pivot {pivot:e})")]
    Singular { pivot: f64 },
    #[error("degenerate fit: residual norm is zero, {0}")]
    DegenerateFit(String),
    #[error("release is {found}; use the {expected} path")]
    WrongPath { expected: &'static str, found: &'static str },
    #[error("sketch has r = {r} rows, need more than p = {p}")]
    InsufficientRows { r: usize, p: usize },
    #[error("row {row} has norm {norm} above the bound {bound}")]
    RefusedRow { row: usize, norm: f64, bound: f64 },
    #[error("rows above the bound {bound}: {rows:?}")]
    RefusedRows { rows: Vec<usize>, bound: f64 },
    #[error("noisy Gram matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("infeasible regime: {0}")]
    Infeasible(String),
    #[error("power is undefined when the coefficient is zero")]
    UndefinedPower,
    #[error("sign of a zero coefficient is undefined")]
    SignUndefined,
    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    InvalidInput,
    Infeasible,
    Degenerate,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Trial { source, .. } => source.kind(),
            Error::Infeasible(_)
            | Error::PreconditionFailed(_)
            | Error::UndefinedPower
            | Error::SignUndefined
            | Error::InsufficientRows { .. } => ErrorKind::Infeasible,
            Error::DegenerateFit(_)
            | Error::Singular { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::Underdetermined { .. } => ErrorKind::Degenerate,
            _ => ErrorKind::InvalidInput,
        }
    }

    pub(crate) fn in_trial(self, trial: usize) -> Error {
        Error::Trial { trial, source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}

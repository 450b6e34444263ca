use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", file.display())]
    Parse { file: PathBuf, line: u64, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("missing covariate `{0}`")]
    MissingCovariate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bin coding mismatch: {0}")]
    BinCodingMismatch(String),

    #[error("rank-deficient design (offending columns: {})", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("insufficient sample: {n} observations for {p} parameters (need at least {needed})")]
    InsufficientSample { n: usize, p: usize, needed: usize },

    #[error("target {target} unreachable within growth bracket; achieved at most {achieved_max}")]
    Unreachable { target: f64, achieved_max: f64 },

    #[error("empty scenario set")]
    EmptyScenario,

    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Alignment(_)
            | Error::InsufficientHistory(_)
            | Error::MissingCovariate(_)
            | Error::InvalidArgument(_)
            | Error::BinCodingMismatch(_)
            | Error::EmptyScenario => ErrorKind::Validation,
            Error::RankDeficient { .. }
            | Error::InsufficientSample { .. }
            | Error::Unreachable { .. } => ErrorKind::Numerical,
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}

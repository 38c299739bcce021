use thiserror::Error;

/// Errors raised by the simulator and the algorithms running on it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Infeasible or out-of-range parameters.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A caller broke an operation's precondition (unsorted input, duplicate keys, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Memory capacity exceeded, or data touched without being resident.
    #[error("residency violation: {0}")]
    Residency(String),
    /// The 2^B-tree construction was asked to run below its validity threshold.
    #[error("below k0: {0}")]
    BelowK0(String),
    /// Malformed instance text.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// An algorithm's output disagreed with its brute-force oracle.
    #[error("oracle mismatch: {0}")]
    Oracle(String),
    /// Host I/O failure (files, not simulated transfers).
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 2 bad parameters or input, 3 failed check,
    /// 4 host I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::BelowK0(_) | Error::Contract(_) | Error::Parse { .. } => 2,
            Error::Oracle(_) | Error::Residency(_) => 3,
            Error::Io(_) => 4,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn residency(msg: impl Into<String>) -> Self {
        Error::Residency(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

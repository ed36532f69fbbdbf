use std::fmt;

/// Failure class; decides the exit status and the `E:<code>:` prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration, flags or input data.
    Validation,
    /// A solver or fit did not converge.
    NonConvergence,
    /// File system trouble.
    Io,
    /// Anything else raised by the numerics.
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::NonConvergence => 3,
            ErrorKind::Io | ErrorKind::Numeric => 1,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::NonConvergence => "nonconvergence",
            ErrorKind::Io => "io",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E:{}:{}", self.kind.code(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<vspin_core::Error> for CliError {
    fn from(e: vspin_core::Error) -> Self {
        use vspin_core::Error as E;
        let kind = match e {
            E::Convergence { .. } => ErrorKind::NonConvergence,
            E::Integration(_) => ErrorKind::Numeric,
            _ => ErrorKind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

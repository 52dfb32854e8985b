use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug)]
pub enum BenchError {
    Io {
        path: PathBuf,
        source: io::Error,
    },
    Core(gcopt_core::Error),
    /// Malformed input file; `offset` is the byte position of the problem.
    Parse {
        path: PathBuf,
        offset: u64,
        msg: String,
    },
    /// Bad checkpoint magic, version or layout.
    Format(String),
    Config(String),
    /// Two metrics files that cannot be compared.
    Schema(String),
}

impl BenchError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, offset: u64, msg: impl Into<String>) -> Self {
        BenchError::Parse {
            path: path.to_path_buf(),
            offset,
            msg: msg.into(),
        }
    }

    /// Configuration and usage problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Core(gcopt_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            BenchError::Core(e) => e.fmt(f),
            BenchError::Parse { path, offset, msg } => {
                write!(f, "{}: parse error at byte {offset}: {msg}", path.display())
            }
            BenchError::Format(msg) => write!(f, "checkpoint format error: {msg}"),
            BenchError::Config(msg) => write!(f, "config error: {msg}"),
            BenchError::Schema(msg) => write!(f, "schema mismatch: {msg}"),
        }
    }
}

impl std::error::Error for BenchError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            BenchError::Io { source, .. } => Some(source),
            BenchError::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<gcopt_core::Error> for BenchError {
    fn from(e: gcopt_core::Error) -> Self {
        BenchError::Core(e)
    }
}

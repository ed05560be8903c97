use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}key `{key}`: {reason}", LineTag(*line))]
    Config {
        key: String,
        line: Option<usize>,
        reason: String,
    },
    #[error("{}{message}", LineTag(*line))]
    Parse { line: Option<usize>, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] irs_d2d::Error),
    /// A verification suite ran but did not meet its bound.
    #[error("check failed: {0}")]
    Check(String),
}

struct LineTag(Option<usize>);

impl fmt::Display for LineTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(l) => write!(f, "line {l}: "),
            None => Ok(()),
        }
    }
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 for bad input or failed checks, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Parse { .. } | HarnessError::Check(_) => 1,
            HarnessError::Io { .. } | HarnessError::Core(_) => 2,
        }
    }
}

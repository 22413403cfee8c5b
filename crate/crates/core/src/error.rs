use std::path::PathBuf;

/// Errors produced by the precoding library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A precoding matrix whose columns are (numerically) linearly dependent.
    #[error("degenerate codeword: smallest/largest singular value ratio {ratio:.3e} is below {tol:.0e}")]
    DegenerateCodeword { ratio: f64, tol: f64 },

    /// Greedy selection ran out of codewords that add a new dimension.
    #[error("infeasible selection: needed {needed} independent codewords, found {found}")]
    Infeasible { needed: usize, found: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by numerically degenerate inputs rather than bad configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::DegenerateCodeword { .. } | Error::Infeasible { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sequence {seq_id:?}: {message}")]
    InvalidSequence { seq_id: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("process is not subcritical: spectral radius of the branching matrix is {radius:.6}")]
    Supercritical { radius: f64 },

    #[error("thinning bound violated at t={t}: intensity {intensity} exceeds bound {bound}")]
    BoundViolation { t: f64, intensity: f64, bound: f64 },

    #[error("gradient check failed: worst relative error {worst:.3e} exceeds {tolerance:.1e}")]
    GradCheck { worst: f64, tolerance: f64 },

    #[error("{0}")]
    Serde(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(seq_id: &str, message: impl Into<String>) -> Self {
        Error::InvalidSequence {
            seq_id: seq_id.to_owned(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::BoundViolation { .. }
                | Error::GradCheck { .. }
        )
    }

    /// Process exit code: 1 for validation/input errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }
}

use std::path::PathBuf;

/// Every failure the library can report.
///
/// Variants are grouped by the caller's likely reaction: configuration
/// problems are fatal, numerical degeneracies are recoverable per trial,
/// and I/O errors carry the offending path.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("grid size {0} must be a power of two")]
    GridNotPowerOfTwo(usize),

    #[error("matrix is numerically rank deficient: {0}")]
    RankDeficient(String),

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("adjusted covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("calibration trace has {got} exchanges, at least {need} are required")]
    TraceTooShort { got: usize, need: usize },

    #[error("clock-error similarity objective is flat; inputs are not reciprocal")]
    FlatSimilarity,

    #[error("static-only CPI is contaminated: second eigenvalue is {ratio:.3} of the first")]
    Contaminated { ratio: f64 },

    #[error("expected a {expected} CPI, got a {found} one")]
    Stage {
        expected: &'static str,
        found: &'static str,
    },

    #[error("empty record set")]
    EmptyRecords,

    #[error("ground-truth sequence has zero energy")]
    ZeroTruth,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

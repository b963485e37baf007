use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid clock parameters: {0}")]
    InvalidClock(String),

    #[error("invalid delay model: {0}")]
    InvalidDelayModel(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("at least 2 rounds are required, got {0}")]
    TooFewRounds(usize),

    #[error("timestamp matrix must have 4 columns, got {0}")]
    BadColumnCount(usize),

    #[error("degenerate parameter vector: psi1 = {0}")]
    DegenerateParams(f64),

    #[error("stacked system is rank deficient (rank {rank} < 3)")]
    SingularSystem { rank: usize },

    #[error("noise variance must be positive, got {0}")]
    InvalidVariance(f64),

    #[error("rank {k} outside 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),

    #[error("degenerate timestamp geometry: Fisher denominator {0} <= 0")]
    DegenerateGeometry(f64),

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("malformed record in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: plotting failed: {reason}")]
    Plot { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

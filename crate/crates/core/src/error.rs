use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("grid shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("unexpected value {value} at cell {index}")]
    UnexpectedValue { value: f64, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no cell is classified in both grids")]
    NoJointCells,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("densities do not cross in interval [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("densities are identical over the search interval; no isolated root")]
    IdenticalDensities,

    #[error("unknown group label {0:?} (expected A, B or C)")]
    UnknownGroup(String),

    #[error("input file not found: {0}")]
    MissingInput(PathBuf),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

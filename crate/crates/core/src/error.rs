use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("{what} index {index} out of range (limit {limit})")]
    Range {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("trajectory {0} has no voxels inside the grid")]
    DegenerateTrajectory(usize),

    #[error("map `{map}`: {reason}")]
    MapConfig { map: String, reason: String },

    #[error("{source_name}:{line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            reason: reason.into(),
        }
    }

    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Range { .. } => "range",
            Error::DegenerateTrajectory(_) => "degenerate-trajectory",
            Error::MapConfig { .. } => "map-config",
            Error::Parse { .. } => "parse",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
            Error::Csv(_) => "io",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config { .. } => 2,
            Error::Usage(_) => 3,
            Error::MapConfig { .. } | Error::Parse { .. } => 4,
            Error::Shape(_) => 5,
            Error::Numeric(_) => 6,
            Error::Range { .. } | Error::DegenerateTrajectory(_) => 7,
            Error::Io(_) | Error::Csv(_) => 8,
        }
    }
}

use std::path::PathBuf;

/// Errors of the std layer; every variant maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum GapError {
    #[error(transparent)]
    Core(#[from] gap_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}` failed for seed {seed}: {source}\n  reproduce with: {repro}")]
    Stage {
        stage: String,
        seed: u64,
        repro: String,
        #[source]
        source: Box<GapError>,
    },
}

pub type Result<T> = std::result::Result<T, GapError>;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;

impl GapError {
    pub fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        GapError::Format { path: path.into(), detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GapError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            GapError::Core(e) => match e {
                gap_core::Error::Config(_) => EXIT_CONFIG,
                gap_core::Error::Format(_) => EXIT_FORMAT,
                gap_core::Error::Training { .. } => EXIT_TRAINING,
                _ => EXIT_OTHER,
            },
            GapError::Config(_) => EXIT_CONFIG,
            GapError::Format { .. } => EXIT_FORMAT,
            GapError::Io { .. } => EXIT_OTHER,
            GapError::Stage { source, .. } => source.exit_code(),
        }
    }
}

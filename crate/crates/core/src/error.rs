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

    #[error("{path}: cannot decode image: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{0}: no such directory")]
    MissingDirectory(PathBuf),

    #[error("{0}: no image files found")]
    EmptySequence(PathBuf),

    #[error("{path}: frame is {found_w}x{found_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("sequence has {len} frames, at least {needed} required")]
    SequenceTooShort { len: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid synthetic sequence: {0}")]
    Synth(String),

    #[error("nothing to evaluate: {0}")]
    Eval(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad user input rather than runtime conditions.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MissingDirectory(_)
                | Error::Parse { .. }
                | Error::Synth(_)
                | Error::EmptySequence(_)
                | Error::SequenceTooShort { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}

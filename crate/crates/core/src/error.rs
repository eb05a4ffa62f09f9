use std::path::PathBuf;

use thiserror::Error;

use crate::model::Level;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed IPC symbol {0:?}")]
    MalformedIpc(String),
    #[error("could not locate field `{field}`")]
    ParseFailure { field: &'static str },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("no admissible citation in corpus")]
    EmptyCorpus,
    #[error("duplicate patent id {0} with conflicting primary class")]
    DuplicateId(String),
    #[error("level mismatch: overlay at {overlay}, similarity matrix at {matrix}")]
    LevelMismatch { overlay: Level, matrix: Level },
    #[error("need at least two non-isolated classes, got {0}")]
    TooFewClasses(usize),
    #[error("index misalignment: {what} has {got} entries, expected {expected}")]
    IndexMisalignment {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("length mismatch: {got} values for {expected} vertices")]
    LengthMismatch { got: usize, expected: usize },
    #[error("syntax error at line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unrecognized search url {0:?}")]
    UnrecognizedUrl(String),
    #[error("transport error for {url}: {reason}")]
    Transport { url: String, reason: String },
    #[error("missing basemap file {0}")]
    MissingBasemap(PathBuf),
    #[error("overlay has no weight on any class of the similarity matrix")]
    EmptyOverlay,
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self.root(), Error::Transport { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}

use std::path::PathBuf;

/// Errors raised by the selection toolkit.
///
/// Variants map onto process exit codes in the CLI: everything except
/// [`Error::Exhausted`] and [`Error::Usage`] is an input error (exit 2).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("{what} out of bounds: {value} > {limit}")]
    Bounds {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("id `{0}` is not in the unlabeled pool")]
    NotUnlabeled(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no {what} for id `{id}`{context}")]
    Coverage {
        what: &'static str,
        id: String,
        context: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("unlabeled pool exhausted at iteration {iteration}")]
    Exhausted { iteration: usize },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn coverage(what: &'static str, id: impl Into<String>) -> Self {
        Error::Coverage {
            what,
            id: id.into(),
            context: String::new(),
        }
    }

    /// Innermost error, looking through iteration wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }
}

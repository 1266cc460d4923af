use std::path::PathBuf;

/// Errors produced anywhere in the library.
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

    #[error("line {line}: duplicate entry ({i}, {j}, {k}), first seen on line {first_line}")]
    DuplicateKey {
        line: usize,
        first_line: usize,
        i: usize,
        j: usize,
        k: usize,
    },

    #[error("index ({i}, {j}, {k}) out of bounds for dims {dims:?}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    OutOfBounds {
        i: usize,
        j: usize,
        k: usize,
        dims: [usize; 3],
        line: Option<usize>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state error: {0}")]
    State(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("size error: {elements} elements exceeds the dense cap of {cap}")]
    Size { elements: u128, cap: usize },

    #[error("divergence at epoch {epoch}, training entry {entry}: non-finite parameter update")]
    Divergence { epoch: usize, entry: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("report: {0}")]
    Report(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

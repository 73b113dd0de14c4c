use thiserror::Error;

/// Errors shared by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller passed something inconsistent (wrong length, bad index).
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed input text or binary data.
    #[error("format error{}: {msg}", at_line(.line))]
    Format { line: Option<usize>, msg: String },
    /// A graph violated a structural precondition of the decomposition.
    #[error("structural error: {0}")]
    Structural(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at_line(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format { line: Some(line), msg: msg.into() }
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::Format { line: None, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

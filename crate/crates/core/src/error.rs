use std::path::PathBuf;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("degenerate channel `{0}`: zero energy")]
    DegenerateChannel(String),

    #[error("composite transmit signal has zero energy (prefilters cancel)")]
    DegenerateSum,

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("channel `{id}`: {source}")]
    InChannel {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the id of the channel being processed.
    pub fn in_channel(self, id: &str) -> Self {
        Error::InChannel {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping channel context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InChannel { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

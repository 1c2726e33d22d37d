use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left} and {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("{op}: {channels} channels cannot be split into {groups} groups")]
    IndivisibleChannels {
        op: &'static str,
        channels: usize,
        groups: usize,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("missing parameter `{0}`")]
    MissingParameter(String),

    #[error("parameter `{name}` has dims {found}, expected {expected}")]
    ParameterDims {
        name: String,
        expected: Shape,
        found: Shape,
    },

    #[error("unexpected parameter `{0}` in weight store")]
    UnexpectedParameter(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("junction `{junction}`: {left} does not match {right}")]
    Junction {
        junction: String,
        left: Shape,
        right: Shape,
    },

    #[error("malformed {format} data: {msg}")]
    Format { format: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument { op, msg: msg.into() }
    }

    pub(crate) fn format(format: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            format,
            msg: msg.into(),
        }
    }

    /// True for errors caused by unreadable or malformed input files.
    pub fn is_malformed_input(&self) -> bool {
        matches!(self, Error::Format { .. } | Error::Io(_))
    }
}

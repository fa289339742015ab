use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("svg parse error: {0}")]
    SvgParse(String),

    #[error("unsupported svg primitive `{element}` at element index {index}")]
    UnsupportedPrimitive { element: String, index: usize },

    #[error("token sequence error: {0}")]
    Sequence(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("tensor error: {0}")]
    Candle(#[from] candle_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

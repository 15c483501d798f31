use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("normal equations are numerically singular ({0}); set a positive ridge epsilon or prune unused atoms")]
    Singular(String),

    #[error("output pixel ({row}, {col}) is not covered by any patch")]
    Coverage { row: usize, col: usize },

    #[error("corpus too flat: collected {collected} of {requested} patch pairs after {attempts} attempts")]
    CorpusTooFlat {
        requested: usize,
        collected: usize,
        attempts: usize,
    },

    #[error("dictionary file: {0}")]
    Format(String),

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

use std::io;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Cosine similarity was requested against an all-zero vector.
    #[error("similarity undefined: {0} vector has zero norm")]
    UndefinedSimilarity(&'static str),

    /// A persisted artifact failed validation while loading.
    #[error("corrupt file (field `{field}`): {detail}")]
    Corrupt { field: &'static str, detail: String },

    /// Artifacts produced under different configurations were combined.
    #[error("incompatible artifacts, mismatched fields: {}", fields.join(", "))]
    Incompatible { fields: Vec<String> },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn corrupt(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Corrupt {
            field,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

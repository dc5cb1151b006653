use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    /// A gradient with zero Euclidean norm has no direction.
    #[error("degenerate gradient: zero norm")]
    DegenerateGradient,

    #[error("non-finite gradient value in segment `{segment}`")]
    NonFiniteGradient { segment: String },

    #[error("non-finite loss while probing coordinate {index}")]
    NonFiniteLoss { index: usize },

    #[error("token id {id} at position {position} is outside the vocabulary")]
    TokenOutOfRange { position: usize, id: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("invalid span: {0}")]
    InvalidSpan(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("class `{class}` has {available} examples but {required} are required")]
    InsufficientClass {
        class: String,
        available: usize,
        required: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("degenerate quadrilateral (zero area)")]
    Degenerate,

    #[error("quadrilateral is not a parallelogram: diagonal midpoints differ by {gap:.3e}")]
    NotParallelogram { gap: f64 },

    #[error("polygon is not convex")]
    NonConvex,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("tensor file: {0}")]
    Tensor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension for {what}: {value}")]
    InvalidDimension { what: &'static str, value: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("invalid label {0}, expected -1 or +1")]
    InvalidLabel(i64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("gradient vanishes at the query point")]
    DegenerateGradient,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("malformed IDX file: {0}")]
    IdxFormat(&'static str),
    #[error("truncated IDX payload: expected {expected} bytes, found {found}")]
    IdxLength { expected: usize, found: usize },
    #[error("IDX count mismatch: {images} images, {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },
    #[error("training diverged at step {step}: non-finite loss")]
    Divergence { step: usize },
}

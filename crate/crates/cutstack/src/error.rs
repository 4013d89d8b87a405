use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("size cap {cap} exceeded: {what} would need {needed}")]
    SizeCap { cap: u64, needed: u64, what: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid splitting: {0}")]
    InvalidSplitting(String),
    #[error("depth cap {max_depth} reached; achieved costs {costs:?}")]
    DepthCap { max_depth: u32, costs: Vec<f64> },
    #[error("construction bug: {0}")]
    Construction(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("exact arithmetic overflow in {0}")]
    Overflow(String),
    #[error("corrupt trace: {0}")]
    CorruptTrace(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

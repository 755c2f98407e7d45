use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("posterior row {0} does not sum to one")]
    RowNotNormalized(usize),

    #[error("negative posterior entry at frame {frame}, symbol {symbol}")]
    NegativeEntry { frame: usize, symbol: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("posterior matrix has no frames")]
    EmptyPosteriors,

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("symbol {0} is not part of the vocabulary")]
    UnknownSymbol(String),

    #[error("labeling contains the blank symbol at position {0}")]
    BlankInLabeling(usize),

    #[error("invalid n-best list: {0}")]
    InvalidNBest(String),

    #[error("invalid confusion network: {0}")]
    InvalidConfusionNetwork(String),

    #[error("confusion set {0} is null with probability ~1 and cannot be compiled")]
    DegenerateSet(usize),

    #[error("target admits no alignment to the posterior matrix")]
    Infeasible,

    #[error("likelihood underflowed with rescaling disabled")]
    Underflow,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration of {size} items exceeds the limit of {limit}")]
    TooLarge { size: f64, limit: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

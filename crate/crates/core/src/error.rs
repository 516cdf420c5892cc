use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fixed-point format Q(word={word_bits}, frac={frac_bits}): need 1 <= frac < word <= 64")]
    InvalidFormat { word_bits: u32, frac_bits: u32 },

    #[error("raw value {raw} does not fit in a {word_bits}-bit word")]
    RawOutOfRange { raw: i64, word_bits: u32 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid reuse factor: {0}")]
    InvalidReuse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("need at least {need} inferences in the trace, got {got}")]
    TooFewInferences { got: usize, need: usize },

    #[error("both background and signal events are required")]
    SingleClass,

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("manifest error at `{path}`: {message}")]
    Manifest { path: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("tensor {0} is not reachable from the differentiated root")]
    Disconnected(usize),

    #[error("invalid cell encoding: {0}")]
    InvalidEncoding(String),

    #[error("motif list mixes activation-slope and cell motifs")]
    MixedVariants,

    #[error("length mismatch ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("motif-networks do not share a blueprint")]
    HeterogeneousBlueprints,

    #[error("degenerate variance: all {0} values are equal")]
    DegenerateVariance(usize),

    #[error("non-finite hypergradient at outer step {step}: {detail}")]
    NonFiniteGradient { step: usize, detail: String },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("data unavailable: {0}")]
    DataUnavailable(String),

    #[error("bad IDX magic {found:#010x} (expected {expected:#010x})")]
    BadMagic { found: u32, expected: u32 },

    #[error("truncated IDX payload: header promises {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("curve series `{0}` is empty")]
    EmptySeries(String),

    #[error("curve series `{0}` has non-increasing x values")]
    UnorderedSeries(String),

    #[error("could not generate {wanted} new motifs (got {got}) after {attempts} attempts")]
    ExhaustedSpace {
        wanted: usize,
        got: usize,
        attempts: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (jitter ladder exhausted at {max_jitter:e})")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("matrix asymmetry {asymmetry:e} exceeds tolerance")]
    NotSymmetric { asymmetry: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested {h} neighbours but only {n} candidates exist")]
    HExceedsN { h: usize, n: usize },

    #[error("variable was not recorded on this tape")]
    UnrecordedNode,

    #[error("output variable is not a scalar ({rows}x{cols})")]
    NonScalarOutput { rows: usize, cols: usize },

    #[error("{n} points exceeds the dense precision guard of {limit}")]
    PrecisionGuard { n: usize, limit: usize },

    #[error("evaluation mask selects no entries")]
    EmptyMask,

    #[error("latent trajectory is rank deficient")]
    SingularProjection,

    #[error("bad magic bytes, not an NNTS file")]
    BadMagic,

    #[error("unsupported NNTS version {0}")]
    VersionMismatch(u32),

    #[error("file is truncated")]
    TruncatedFile,

    #[error("missing tensor {0:?}")]
    MissingTensor(String),

    #[error("parameter and gradient shapes differ: {0}")]
    ShapeMismatch(String),

    #[error("every entry would be missing")]
    AllMissing,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DcotError>;

#[derive(Debug, Error)]
pub enum DcotError {
    #[error("no token reaches the minimum count of {min_count}")]
    EmptyVocabulary { min_count: usize },

    #[error("corpus contains no documents")]
    EmptyCorpus,

    #[error("invalid prototype count {r}: must satisfy 0 < r < {d}")]
    InvalidPrototypeCount { r: usize, d: usize },

    #[error("corruption survival probability must be in (0,1], got {0}")]
    InvalidProbability(f64),

    #[error("ridge must be finite and non-negative, got {0}")]
    InvalidRidge(f64),

    #[error("input dimension {dim} exceeds the dense scatter cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("linear system is singular; retry with a positive ridge")]
    SingularSystem,

    #[error("solution contains non-finite entries")]
    NonFiniteResult,

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<DcotError>,
    },

    #[error("enumeration needs d <= {max}, got d = {d}")]
    DimensionTooLarge { d: usize, max: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("invalid neighbour count k = {k} for {n} training vectors")]
    InvalidK { k: usize, n: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient labels: {0}")]
    InsufficientLabels(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic bytes {0:?}, expected \"DCOT\"")]
    BadMagic([u8; 4]),

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),

    #[error("model file is truncated")]
    TruncatedFile,

    #[error("model invariant violated: {0}")]
    InvariantViolation(String),
}

impl DcotError {
    pub(crate) fn in_layer(self, layer: usize) -> Self {
        DcotError::Layer {
            layer,
            source: Box::new(self),
        }
    }
}

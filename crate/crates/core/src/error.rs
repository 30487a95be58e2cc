use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sequence")]
    EmptySequence,

    #[error("invalid residue '{residue}' at position {position}")]
    InvalidResidue { residue: char, position: usize },

    #[error("sequence of length {length} exceeds the maximum of {max}")]
    TooLong { length: usize, max: usize },

    #[error("sequence of length {length} is shorter than the required {min}")]
    TooShort { length: usize, min: usize },

    #[error("pH {0} outside the open interval (0, 14)")]
    PhOutOfRange(f64),

    #[error("charge curve has no root in (0, 14)")]
    NoRoot,

    #[error("degenerate scale table: codewords {a} and {b} coincide")]
    DegenerateTable { a: String, b: String },

    #[error("standardized codeword for {residue} has norm {norm:.4}, below PAD margin {margin}")]
    PadCollision {
        residue: char,
        norm: f64,
        margin: f64,
    },

    #[error("first embedding column decodes to PAD")]
    EmptyDecode,

    #[error("embedding shape {rows}x{cols} does not match {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },

    #[error("invalid range for {property}: [{lo}, {hi}]")]
    InvalidRange {
        property: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("reference set is empty")]
    EmptyReferenceSet,

    #[error("source set is empty")]
    EmptySource,

    #[error("only one class present")]
    SingleClass,

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("feature layout mismatch: model expects {expected}, got {found}")]
    LayoutMismatch { expected: String, found: String },

    #[error("unsupported version: {0}")]
    VersionMismatch(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("need at least {needed} sequences, got {got}")]
    TooFewSequences { needed: usize, got: usize },

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("diffusion step {step} outside 1..={max}")]
    StepOutOfRange { step: usize, max: usize },

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("non-finite diffusion state at step {0}")]
    NonFiniteState(usize),

    #[error("denoiser has not been trained")]
    UntrainedDenoiser,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: record '{id}': {message}")]
    Fasta {
        path: PathBuf,
        line: usize,
        id: String,
        message: String,
    },

    #[error("duplicate record id '{0}'")]
    DuplicateId(String),

    #[error("malformed table {name}: {message}")]
    Table { name: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

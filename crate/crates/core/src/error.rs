use thiserror::Error;

/// Broad failure class, used by front ends to pick a stable exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("lattice code {code} out of range for a {bits}-bit lattice")]
    CodeOutOfRange { code: u8, bits: u8 },

    #[error("lattice {0} has no shift-only multiply")]
    NotShiftable(&'static str),

    #[error("accumulator overflow: {0}")]
    Overflow(String),

    #[error("integer audit mismatch at output ({row}, {col})")]
    AuditMismatch { row: usize, col: usize },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("unexpected EOF")]
    UnexpectedEof,

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("missing tensor {0:?}")]
    MissingTensor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Overflow(_) | Error::AuditMismatch { .. } | Error::NonFinite(_) => {
                ErrorClass::Numeric
            }
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

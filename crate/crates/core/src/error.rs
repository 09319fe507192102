use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors across the pipeline: validation, file containers, recovery.
#[derive(Debug, Error)]
pub enum Error {
    /// One or more configuration/type invariants violated; every violation is listed.
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic in {path}: expected {expected}")]
    BadMagic { path: String, expected: &'static str },

    #[error("truncated payload in {path}: expected {expected} bytes, got {got}")]
    TruncatedPayload {
        path: String,
        expected: u64,
        got: u64,
    },

    #[error("checksum mismatch in {path}: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch {
        path: String,
        stored: u32,
        computed: u32,
    },

    /// Cache file was built for a different setup and must be regenerated.
    #[error("stale cache: {0}")]
    StaleCache(String),

    /// A Fourier index fell where the pulse spectrum is too small to invert.
    #[error("band violation: |H| = {magnitude:.3e} at index {index} is below h_min = {h_min:.3e}")]
    BandViolation {
        index: i64,
        magnitude: f64,
        h_min: f64,
    },

    /// The least-squares system on the selected support lost rank.
    #[error("degenerate support after selecting {selected} atoms")]
    DegenerateSupport { selected: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty image: log compression needs a positive peak")]
    EmptyImage,
}

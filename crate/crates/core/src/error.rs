use alloc::string::String;

/// Errors reported by construction and detection routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("order {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid Givens plane ({i}, {k}) for dimension {dim}")]
    InvalidGivensPlane { dim: usize, i: usize, k: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported QAM order {0}")]
    UnsupportedQamOrder(usize),
    #[error("bit string has length {got}, expected {expected}")]
    BadBitLength { expected: usize, got: usize },
    #[error("joint detector requires sigma2_p > 0; use the per-channel receiver")]
    ZeroPhaseVariance,
    #[error("joint enumeration of {size} candidates exceeds cap {cap}")]
    EnumerationTooLarge { size: u64, cap: u64 },
    #[error("invalid rotation descriptor: {0}")]
    BadDescriptor(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("quadrature did not converge (achieved relative tolerance {achieved:e})")]
    QuadratureNotConverged { achieved: f64 },
}

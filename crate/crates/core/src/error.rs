use alloc::string::String;
use core::fmt;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two volumes (or patch vectors) that must share a shape do not.
    DimsMismatch { expected: (usize, usize, usize), got: (usize, usize, usize) },
    /// Patch vectors of unequal length.
    LengthMismatch { left: usize, right: usize },
    /// A voxel or matrix entry is NaN or infinite.
    NonFinite { what: &'static str },
    /// Normalization is undefined: the 0.95-quantile is not strictly positive.
    DegenerateNormalization { q95: f64 },
    /// The requested patch tiling does not partition the volume.
    DegenerateTiling { dims: (usize, usize, usize), n: usize },
    /// Offset component outside {0, ..., ceil(n/2)}.
    OffsetOutOfRange { offset: (usize, usize, usize), max: usize },
    /// Scaling iterations underflowed to an all-zero row; epsilon is too small
    /// for the standard-domain kernel.
    NumericalUnderflow { epsilon: f64 },
    /// Invalid solver or loss configuration.
    InvalidConfig(String),
    /// The CE mask contains no voxels, so MAE over CE voxels is undefined.
    EmptyMask,
    /// Fewer than two non-CE voxels; a standard deviation cannot be estimated.
    TooFewNonCeVoxels { count: usize },
    /// A volume is too small for the SSIM window.
    VolumeTooSmall { dims: (usize, usize, usize), window: usize },
    /// Invalid phantom specification.
    InvalidSpec(String),
    /// The fit diverged (loss exceeded 10x its initial value).
    Divergence { initial: f64, current: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimsMismatch { expected, got } => {
                write!(f, "volume dims mismatch: expected {expected:?}, got {got:?}")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "patch length mismatch: {left} vs {right}")
            }
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::DegenerateNormalization { q95 } => {
                write!(f, "degenerate normalization: 0.95-quantile = {q95} is not positive")
            }
            Error::DegenerateTiling { dims, n } => {
                write!(f, "patch size n={n} does not tile volume dims {dims:?}")
            }
            Error::OffsetOutOfRange { offset, max } => {
                write!(f, "offset {offset:?} outside {{0..={max}}}^3")
            }
            Error::NumericalUnderflow { epsilon } => {
                write!(f, "scaling kernel underflowed at epsilon = {epsilon}; raise epsilon")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::EmptyMask => write!(f, "CE mask is empty: MAE over CE voxels is undefined"),
            Error::TooFewNonCeVoxels { count } => {
                write!(f, "only {count} non-CE voxels; need at least 2 to estimate a std")
            }
            Error::VolumeTooSmall { dims, window } => {
                write!(f, "volume dims {dims:?} smaller than SSIM window {window}")
            }
            Error::InvalidSpec(msg) => write!(f, "invalid phantom spec: {msg}"),
            Error::Divergence { initial, current } => {
                write!(f, "fit diverged: loss {current} exceeds 10x initial {initial}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

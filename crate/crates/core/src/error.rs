use thiserror::Error;

/// Errors produced by the reconstruction pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate initial condition: {0}")]
    DegenerateInitialCondition(String),

    #[error("grid is not strictly increasing at index {index}")]
    MonotonicityViolation { index: usize },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("insufficient features: found {found}, need at least {needed}")]
    InsufficientFeatures { found: usize, needed: usize },

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("numerical failure at iteration {iteration} ({stage})")]
    NumericalFailure { iteration: usize, stage: &'static str },

    #[error("normalization degenerate: reference modulation energy {energy:e} is too small")]
    NormalizationDegenerate { energy: f64 },

    #[error("undersampled coupling surface: {} torus cells below kernel-mass threshold", cells.len())]
    UndersampledRegion { cells: Vec<(usize, usize)> },

    #[error("protophase-to-phase map is not monotone (harmonic bound {bound:.3} >= 1)")]
    NonMonotonePhase { bound: f64 },

    #[error("degenerate factorization: {0}")]
    DegenerateFactorization(String),
}

impl Error {
    /// True for failures caused by the numbers rather than by how the caller set things up.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

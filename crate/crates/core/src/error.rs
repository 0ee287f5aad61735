use thiserror::Error;

/// Errors produced by the model builders, estimators and oracles.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("invalid half-filling sector for {0} sites: need an even count of at least 4")]
    InvalidSector(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e}, allowed {allowed:.3e})")]
    NotHermitian { deviation: f64, allowed: f64 },

    #[error("matrix is not unitary (max |U^dag U - 1| = {deviation:.3e}, allowed {allowed:.3e})")]
    NotUnitary { deviation: f64, allowed: f64 },

    #[error("eigendecomposition failed its residual check ({residual:.3e} > {allowed:.3e})")]
    Residual { residual: f64, allowed: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("request too large: {0}")]
    TooLarge(String),

    #[error("spectrum is degenerate: gap {gap:.3e} between levels {index} and {next} is below {threshold:.3e}", next = .index + 1)]
    DegenerateSpectrum { index: usize, gap: f64, threshold: f64 },

    #[error("trace sample {value:.6e} exceeds the bound {bound:.6e}")]
    SampleBound { value: f64, bound: f64 },

    #[error("insufficient signal for a power-law fit: {usable} usable points, need {required}")]
    InsufficientSignal { usable: usize, required: usize },

    #[error("the error curve never drops below {gamma}")]
    NoCrossing { gamma: f64 },

    #[error("arithmetic overflow computing {0}")]
    Overflow(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exponential moment diverges: {0}")]
    Divergent(String),

    #[error("measure is not tempered at rate {rate}: {reason}")]
    NotTempered { rate: f64, reason: String },

    #[error("split radius {split_r} is below the cell width {h}")]
    SplitTooSmall { split_r: f64, h: f64 },

    #[error("ball B({center}, {radius}) is not contained in [{x_min}, {x_max}]")]
    BallExceedsDomain {
        center: f64,
        radius: f64,
        x_min: f64,
        x_max: f64,
    },

    #[error("convolution kernel has non-zero far field ({left}, {right})")]
    KernelNotIntegrable { left: f64, right: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time step {dt} exceeds the stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("degenerate problem: no transport or diffusion, use dt = {dt}")]
    DegenerateProblem { dt: f64 },

    #[error("domain too small: estimated outside mass {outside_mass:e} exceeds {allowed:e}")]
    DomainTooSmall { outside_mass: f64, allowed: f64 },

    #[error("spectral kernel negativity {value:e} below the clamp threshold")]
    SpectralNegativity { value: f64 },

    #[error("time {t} outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("test function touches the boundary of the space-time domain: {0}")]
    TestFunctionTouchesBoundary(String),

    #[error("snapshot times do not match: {0}")]
    SnapshotMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` is neither `Clone` nor `PartialEq`; keep the message only.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct IoError(pub String);

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(IoError(e.to_string()))
    }
}

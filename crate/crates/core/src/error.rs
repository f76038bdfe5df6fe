use thiserror::Error;

/// Errors raised by the simulation and reconstruction routines.
///
/// Variants fall in two families: `Domain`/`Invalid` for inputs that violate a
/// documented precondition, and the remaining ones for numerical or physical
/// failures discovered while computing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error(
        "frequency {omega:.6e} rad/s is at or beyond the band edge (|ω-ω_p| must be < {limit:.6e})"
    )]
    BandEdge { omega: f64, limit: f64 },

    #[error("sideband window spans {periods} modulation periods; an integer count is required")]
    NonIntegerWindow { periods: f64 },

    #[error("no DC correction root for Φ_AC = {amplitude:.5} Φ₀")]
    NoDcRoot { amplitude: f64 },

    #[error("requested sideband amplitude {requested:.4} exceeds the attainable maximum {max:.4}")]
    Unreachable { requested: f64, max: f64 },

    #[error("step response does not settle: final deviation {deviation:.3e}")]
    NotSettled { deviation: f64 },

    #[error("fitted compensation filter is unstable (pole radius {radius:.6})")]
    UnstableFilter { radius: f64 },

    #[error("time step {dt:.3e} s too coarse for {rate_name} ({rate:.3e} rad/s); need dt <= {limit:.3e} s")]
    StepTooCoarse {
        dt: f64,
        rate: f64,
        rate_name: &'static str,
        limit: f64,
    },

    #[error("emitter left entangled or excited after the schedule (population outside |g> = {leak:.3e})")]
    EmitterNotReset { leak: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),

    #[error("noise source is not calibrated")]
    Uncalibrated,

    #[error("calibration alarm: gain ratio {ratio:.4} outside [0.8, 1.2]")]
    CalibrationAlarm { ratio: f64 },

    #[error("malformed shot file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, field: &'static str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Invalid {
            field,
            reason: reason.into(),
        })
    }
}

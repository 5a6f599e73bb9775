use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge (estimate {estimate:e}, error {error:e}, depth {depth})")]
    QuadratureFailed {
        estimate: f64,
        error: f64,
        depth: u32,
    },

    #[error("result overflows double precision: {0}")]
    Overflow(String),

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("blow-up signal at t = {t}: density proxy {value:e} exceeds cap {cap:e} (diagnostic only, not a proof of blow-up)")]
    BlowUp { t: f64, value: f64, cap: f64 },

    #[error("time step underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("ODE integration failed at y = {y}: {reason}")]
    OdeFailure { y: f64, reason: String },

    #[error("no shooting bracket found: {0}")]
    NoBracket(String),

    #[error("missing snapshot at t = {0}")]
    MissingSnapshot(f64),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),
}

impl Error {
    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureFailed { .. }
                | Error::Overflow(_)
                | Error::SingularSystem { .. }
                | Error::StepUnderflow { .. }
                | Error::OdeFailure { .. }
                | Error::NoBracket(_)
                | Error::Divergent(_)
        )
    }

    /// True for the diagnostic blow-up signals of the time stepper.
    pub fn is_blowup_signal(&self) -> bool {
        matches!(self, Error::BlowUp { .. } | Error::StepUnderflow { .. })
    }
}

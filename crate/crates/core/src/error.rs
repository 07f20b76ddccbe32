use thiserror::Error;

/// Errors raised by the simulator and the analysis stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("sample step {dt} us too coarse: generator norm gives {phase:.3} rad per step, need dt <= {required_dt:.3e} us")]
    StepTooCoarse { dt: f64, phase: f64, required_dt: f64 },

    #[error("ill-conditioned inversion: condition number {condition:.3e} exceeds {limit:.1e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("provider failure: {0}")]
    Provider(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

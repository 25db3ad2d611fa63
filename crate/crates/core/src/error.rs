use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or combination of parameters violates a precondition.
    #[error("configuration error: {0}")]
    Config(String),
    /// A requested index or instant lies outside the record.
    #[error("out of range: {0}")]
    Range(String),
    /// Two records that must share a time grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// Pilot-tone phase calibration could not lock onto a pilot.
    #[error("calibration failed: {0}")]
    Calibration(String),
    /// A numerical failure at run time (e.g. a vanishing monitor power).
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than a
    /// failure during the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::GridMismatch(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
pub(crate) use config_err;

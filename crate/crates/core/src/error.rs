use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} is not in the interior of the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("time must be positive and finite, got {0}")]
    InvalidTime(f64),

    #[error("dimension mismatch: domain has dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid drift: {0}")]
    InvalidDrift(String),

    #[error("quadrature did not converge: estimate {estimate}, error bound {error}")]
    QuadratureFailed { estimate: f64, error: f64 },

    #[error("path left the domain at t={time} after {retries} redraws and {halvings} step halvings")]
    ExitFailure {
        time: f64,
        retries: u32,
        halvings: u32,
    },

    #[error("drift is not finite at t={time}, y={point:?}")]
    NonFiniteDrift { time: f64, point: Vec<f64> },

    #[error("no accepted path after {attempts} attempts")]
    AttemptsExhausted { attempts: u64 },

    #[error("flow did not coalesce: {survivors} particles survive")]
    NotCoalesced { survivors: usize },

    #[error("interval probability underflows on ({lo}, {hi})")]
    ThetaUnderflow { lo: f64, hi: f64 },
}

impl Error {
    /// Simulation failures (as opposed to bad inputs).
    pub fn is_simulation_failure(&self) -> bool {
        matches!(
            self,
            Error::ExitFailure { .. }
                | Error::NonFiniteDrift { .. }
                | Error::AttemptsExhausted { .. }
                | Error::NotCoalesced { .. }
                | Error::ThetaUnderflow { .. }
        )
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

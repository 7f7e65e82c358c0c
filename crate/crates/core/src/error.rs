use thiserror::Error;

/// Errors raised by model construction, analysis and integration.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed hyperedge or interaction rule.
    #[error("structural error: {0}")]
    Structure(String),

    /// A caller broke an operation's precondition (negative rate, non-Metzler input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A modelling assumption does not hold (reducible transmission matrix, bad initial state).
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// An iterative method failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Adaptive step size collapsed; the problem is likely stiff at this scale.
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    /// The drift produced NaN or infinity.
    #[error("non-finite drift at t = {t}")]
    NonFiniteDrift { t: f64 },

    /// Scenario parsing or schema failure.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of numerical procedures rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::StepUnderflow { .. } | Error::NonFiniteDrift { .. }
        )
    }

    /// True when the inputs violate a modelling assumption or contract.
    pub fn is_assumption(&self) -> bool {
        matches!(self, Error::Assumption(_) | Error::Contract(_) | Error::Structure(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

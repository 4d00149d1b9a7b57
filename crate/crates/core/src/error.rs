use thiserror::Error;

/// Errors raised by the analytic model, the optimizers and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A closed-form probability left [0, 1]; the configuration is outside the
    /// regime where the linearized handover formulas hold.
    #[error("regime violation: {quantity} = {value} is outside [0, 1]")]
    RegimeViolation { quantity: &'static str, value: f64 },

    /// The handover overhead cannot be carried at this speed: the bytes a user
    /// can move through one cell do not exceed `s_h` (velocity limit exceeded).
    #[error("unsupportable velocity: {detail} (speed {speed} m/s)")]
    UnsupportableVelocity { speed: f64, detail: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("insufficient power budget: class {class} gets {power}, needs at least {floor}")]
    InsufficientPowerBudget { class: usize, power: f64, floor: f64 },

    #[error("unsupported dimension: grid oracle handles at most 3 classes, got {0}")]
    UnsupportedDimension(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

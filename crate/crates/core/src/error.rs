use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported number of modes: {0} (expected 2 or 3)")]
    InvalidModes(usize),

    #[error("step size underflow at t = {t}: h = {h:e}")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("precision exhausted at t = {t}: {needed} bits needed, cap is {cap}")]
    PrecisionExhausted { t: f64, needed: u32, cap: u32 },

    #[error("non-physical covariance matrix: {0}")]
    NonPhysical(String),

    #[error("outside the domain of validity: {0}")]
    Domain(String),

    #[error("no root in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("averaging window too short: {0}")]
    WindowTooShort(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    Unknown { kind: &'static str, name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Configuration-class errors as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Unknown { .. } | Error::InvalidModes(_) | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors produced by the predistortion workbench.
#[derive(Debug, Error)]
pub enum WdpdError {
    #[error("invalid waveform spec: {0}")]
    InvalidSpec(String),
    #[error("waveform has zero power")]
    UndefinedPower,
    #[error("reference signal has zero power")]
    UndefinedReference,
    #[error("invalid Walsh order {0}: must be a power of two in [2, 4096]")]
    InvalidOrder(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("no candidate fits a budget of {budget:.3e} FLOPS")]
    InfeasibleBudget { budget: f64 },
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: header declares {declared} samples, payload holds {available}")]
    Length { declared: u64, available: u64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WdpdError>;

pub(crate) fn dim_check(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(WdpdError::Dimension { expected, actual })
    }
}

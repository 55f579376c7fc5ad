use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AfbmError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("degenerate filter: c_tilde[{index}] = {value:e} on an active subcarrier")]
    DegenerateFilter { index: usize, value: f64 },

    #[error("delay {ell} out of range for frame length {m}")]
    DelayOutOfRange { ell: usize, m: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("pilot does not excite dictionary atom (delay bin {k}, doppler bin {d})")]
    ZeroAtom { k: usize, d: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, AfbmError>;

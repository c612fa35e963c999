use thiserror::Error;

/// Errors raised by the mechanism engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} outside the support [0, {upper}]")]
    Domain { value: f64, upper: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation `{op}` is not supported for {kind} distributions")]
    Unsupported { op: &'static str, kind: &'static str },

    #[error("density vanishes at {value}; virtual value is singular")]
    Singular { value: f64 },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("unknown item index {0}")]
    UnknownItem(usize),

    #[error("instance too large for exhaustive search: {count} candidate assignments (limit {limit})")]
    TooLarge { count: u128, limit: u128 },

    #[error("flow network error: {0}")]
    Flow(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("volume threshold {v0} is not achievable; the maximum achievable volume is {max_volume}")]
    InfeasibleThreshold { v0: f64, max_volume: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

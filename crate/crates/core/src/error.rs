use std::fmt;

/// Why the single-sketch maximum-likelihood bracket does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// Every register is still zero; the estimate is 0.
    Zero,
    /// Every register is saturated; the estimate is unbounded.
    Saturated,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degeneracy::Zero => f.write_str("all registers are zero"),
            Degeneracy::Saturated => f.write_str("all registers are saturated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid sketch configuration p={p}, q={q} (need 2 <= p <= 26 and p + q <= 64)")]
    InvalidConfig { p: u8, q: u8 },

    #[error("sketch configurations differ: (p={0}, q={1}) vs (p={2}, q={3})")]
    ConfigMismatch(u8, u8, u8, u8),

    #[error("malformed sketch data: {0}")]
    Format(String),

    #[error("register {index} has value {value}, maximum allowed is {max}")]
    Range { index: usize, value: u8, max: u8 },

    #[error("linear counting is undefined when no register is zero")]
    ZeroRegistersExhausted,

    #[error("raw estimate {raw} is outside the domain of the large range correction (limit {limit})")]
    OutOfDomain { raw: f64, limit: f64 },

    #[error("the original estimator requires p + q = 32, got p={p}, q={q}")]
    UnsupportedConfig { p: u8, q: u8 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("degenerate histogram: {0}")]
    Degenerate(Degeneracy),

    #[error("solver did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

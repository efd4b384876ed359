use thiserror::Error;

/// Errors produced by the protocol engine, the privacy oracle and the
/// numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch: {left} bits vs {right} bits")]
    LengthMismatch { left: usize, right: usize },

    #[error("index {index} out of range for a string of {len} bits")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("channel symbol {0} is not in {{0,1,2}}")]
    InvalidSymbol(u8),

    #[error("invalid hex encoding: {0}")]
    InvalidHex(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "capacity shortfall: requested ({ell1}, {ell2}) bits but the channel realization supports at most ({max1}, {max2})"
    )]
    CapacityShortfall {
        ell1: usize,
        ell2: usize,
        max1: usize,
        max2: usize,
    },

    #[error("position {index} has channel output 1 and cannot be decoded")]
    UndecodablePosition { index: usize },

    #[error("enumeration needs about {required} weighted assignments, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("variable `{0}` appears in more than one group")]
    OverlappingGroups(String),

    #[error("session aborted")]
    Aborted,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("coefficient {value} does not fit in a signed {width}-bit word")]
    CoefficientOverflow { value: i64, width: u32 },

    #[error("problem has no {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("division by zero")]
    DivisionByZero,

    #[error("no usable diagonal for variable {var}")]
    NoDiagonal { var: usize },

    #[error("singular matrix")]
    Singular,

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("search limit exceeded: {0}")]
    CapExceeded(String),

    #[error("no finite enumeration box for variable {var}")]
    UnboundedBox { var: usize },

    #[error("enumeration box has {points} points, above the cap of {cap}")]
    BoxTooLarge { points: u128, cap: u128 },

    #[error("operand {value} out of range for a {width}-bit word")]
    Quantization { value: i128, width: u32 },

    #[error("constraint {0} is not resident in the PIM array")]
    NotResident(usize),

    #[error("unknown event kind `{0}`")]
    UnknownEvent(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("runs describe different instances: {0}")]
    MismatchedRuns(String),
}

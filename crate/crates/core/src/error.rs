use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands with incompatible shapes.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    InvalidArgument(String),
    /// A non-finite value reached an optimizer; the state for `param` is unusable.
    Poisoned {
        param: String,
    },
    /// An operation was called in the wrong order, e.g. backward before forward.
    State(&'static str),
    Data(String),
    Config(String),
    /// Two run configurations expected to differ only in the GC flag differ elsewhere.
    InvalidPair(String),
    /// A stored tensor does not fit the model it is loaded into.
    Incompatible {
        tensor: String,
        reason: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "dimension error in {op}: {lhs:?} vs {rhs:?}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Poisoned { param } => {
                write!(f, "optimizer state poisoned by non-finite value in `{param}`")
            }
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::InvalidPair(msg) => write!(f, "invalid run pair: {msg}"),
            Error::Incompatible { tensor, reason } => {
                write!(f, "incompatible tensor `{tensor}`: {reason}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

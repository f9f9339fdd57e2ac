use core::fmt;

/// Errors raised by the core numerics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid parameters or inconsistent configuration.
    Config(&'static str),
    /// Shapes or dimensions that do not line up.
    Dimension { expected: usize, found: usize },
    /// A problem larger than the solver's configured capacity.
    Capacity { requested: usize, limit: usize },
    /// Argument outside the domain of a closed-form expression.
    Domain(&'static str),
    /// Empty measure, grid or batch.
    Empty(&'static str),
    /// Non-finite values or divergence during training.
    TrainingFault { iteration: u64, reason: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::Capacity { requested, limit } => {
                write!(f, "capacity exceeded: {requested} > {limit}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::TrainingFault { iteration, reason } => {
                write!(f, "training fault at iteration {iteration}: {reason}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("inconsistent input: {0}")]
    Consistency(String),
    #[error("cannot balance labeled classes: {0}")]
    Balance(String),
    #[error("problem size {size} exceeds cap {cap}: {hint}")]
    Size {
        size: usize,
        cap: usize,
        hint: &'static str,
    },
    #[error("denominator not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("eigen solver did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("training diverged at iteration {iteration}: {what}")]
    Training { iteration: usize, what: String },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail_arg {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Argument(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail_arg;

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("transition row {row} sums to {sum}, not 1")]
    NonStochasticRow { row: usize, sum: f64 },

    #[error("negative transition probability {value} at ({row}, {col})")]
    NegativeProbability { row: usize, col: usize, value: f64 },

    #[error("discount {0} is outside [0, 1)")]
    BadDiscount(f64),

    #[error("state weights are not a probability vector: {0}")]
    BadWeights(String),

    #[error("stationary distribution is not unique (eigenvalue-1 eigenspace has dimension {dim})")]
    NonUniqueStationary { dim: usize },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("non-finite entry in matrix {0}")]
    NonFiniteEntry(&'static str),

    #[error("non-finite iterate in {phase} at outer step {outer}, inner step {inner}")]
    NonFiniteIterate {
        phase: &'static str,
        outer: usize,
        inner: usize,
    },

    #[error("theorem premise violated: {0}")]
    PremiseViolated(String),

    #[error("parameter spaces differ: {0}")]
    SpaceMismatch(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("the affine set is empty")]
    EmptySet,

    #[error("could not draw a well-conditioned feature matrix after {attempts} attempts")]
    RankFailure { attempts: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Numerical breakdown, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteIterate { .. }
                | Error::NoConvergence { .. }
                | Error::SingularSystem
                | Error::RankFailure { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

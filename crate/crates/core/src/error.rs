use thiserror::Error;

/// Errors produced by the coupling library.
#[derive(Debug, Clone, Error)]
pub enum AtcError {
    /// An argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A deformed configuration that cannot be evaluated (collapsed bond).
    #[error("configuration error: bond length {length} is below the evaluation guard")]
    Configuration { length: f64 },

    /// Approximation parameters for which the optimal-parameter formulas are undefined.
    #[error("ill-posed parameters: {0}")]
    IllPosed(String),

    /// Invalid user input or inconsistent arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// The KKT matrix could not be factorized.
    #[error("singular matrix: zero pivot at row {row} (pivot ratio estimate {condition:.3e})")]
    SingularMatrix { row: usize, condition: f64 },

    /// Newton iteration stopped before reaching the tolerance.
    #[error("no convergence after {iterations} iterations (residual {:.3e})", history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { iterations: usize, history: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, AtcError>;

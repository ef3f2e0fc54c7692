use thiserror::Error;

/// Errors raised by the geometry, lifting, objective and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate retraction: U + H is rank deficient (min |R_ii| = {0:e})")]
    DegenerateRetraction(f64),
    #[error("measurement operator is rank deficient (|R_ii| = {pivot:e} at step {index})")]
    RankDeficient { index: usize, pivot: f64 },
    #[error("integer overflow while counting monomials for n = {n}, d = {d}")]
    Overflow { n: usize, d: usize },
    #[error("lifted dimension {size} exceeds cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("objective form does not match lifting: {0}")]
    FormMismatch(String),
    #[error("line search failed after {0} backtracking steps")]
    LineSearchFailure(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unknown solver `{0}`")]
    UnknownSolver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: &'static str, expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::Dimension {
        context,
        expected: format!("{}x{}", expected.0, expected.1),
        got: format!("{}x{}", got.0, got.1),
    }
}

pub(crate) fn check_shape(context: &'static str, m: &nalgebra::DMatrix<f64>, expected: (usize, usize)) -> Result<()> {
    if m.shape() != expected {
        return Err(dim_err(context, expected, m.shape()));
    }
    Ok(())
}

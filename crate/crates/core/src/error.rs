use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("degenerate moments: {0}")]
    DegenerateMoments(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("input not orthogonal to the collision invariants (projection norm {0:e})")]
    NotOrthogonal(f64),
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },
    #[error("field is not smooth enough: spectral tail ratio {0:e}")]
    NotSmooth(f64),
    #[error("trajectory misalignment at times {0:?}")]
    Misaligned(Vec<f64>),
    #[error("{context} at t = {time}: {source}")]
    AtTime {
        time: f64,
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("not available: {0}")]
    Unavailable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

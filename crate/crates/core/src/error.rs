use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel is singular at x={x:?}, y={y:?}")]
    SingularPoint { x: Vec<f64>, y: Vec<f64> },

    #[error("all eigenvalues clipped (max eigenvalue {max_eigenvalue:e}); kernel is not PSD on this grid")]
    AllEigenvaluesClipped { max_eigenvalue: f64 },

    #[error("double-convolution quadrature is not finite or unstable under refinement: {0}")]
    NonFiniteQuadrature(String),

    #[error("point {point:?} lies outside the grid box")]
    OutOfBox { point: Vec<f64> },

    #[error("box too small: {rejected} of {total} Brownian paths left the lattice box")]
    BoxTooSmall { rejected: usize, total: usize },

    #[error("non-finite value at step {step}, node {node}; dt is too large for the coefficients")]
    NonFinite { step: usize, node: usize },

    #[error("Picard iteration did not converge after {iterations} iterations (last sup-difference {last_diff:e})")]
    NoConvergence { iterations: usize, last_diff: f64 },

    #[error("exponential weights degenerated: effective sample size {ess:.3} < 10")]
    DegenerateWeights { ess: f64 },

    #[error("too few samples: {got} (need at least {need})")]
    TooFewSamples { got: usize, need: usize },

    #[error("insufficient lags: {0}")]
    InsufficientLags(String),

    #[error("{} of the requested points failed; first: {}", .0.len(), .0[0].1)]
    Aggregate(Vec<(usize, Error)>),

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

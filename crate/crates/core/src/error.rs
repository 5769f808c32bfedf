use thiserror::Error;

/// Errors raised by mesh construction, discretization and time stepping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time-step guard violated on element {element}: dt*|u_h|_1,inf = {product:.6e}, jacobian = {jacobian:.6e}")]
    TimestepViolation {
        element: usize,
        product: f64,
        jacobian: f64,
    },

    #[error("degenerate characteristic map on element {element}: jacobian {jacobian:.6e} outside [1/2, 3/2]")]
    DegenerateMap { element: usize, jacobian: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConverged { iterations: usize, residual: f64 },

    #[error("malformed mesh file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Crate-wide error type.
///
/// `Overflow` and `NumericalFault` are deliberately distinct: an exponent
/// overflow in a pathwise functional means the path has left the range where
/// double precision is meaningful (the caller may treat it as an exploded
/// path), while a NaN is always a bug or an invalid input and is never
/// interpreted as blowup.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{what} supports at most n_steps = {cap}, got {n}")]
    GridCap {
        what: &'static str,
        n: usize,
        cap: usize,
    },

    #[error("Cholesky factorization failed for the {n}x{n} fBm covariance; the matrix is numerically indefinite at this size, reduce n_steps")]
    CholeskyFailed { n: usize },

    #[error("exponent {value:.6e} exceeds the overflow guard {limit} at t = {t}; the path integrand is not representable in double precision")]
    Overflow { value: f64, limit: f64, t: f64 },

    #[error("{context}: encountered NaN (numerical fault, not blowup)")]
    NumericalFault { context: String },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("{0} did not converge")]
    Convergence(&'static str),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

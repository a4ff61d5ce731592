use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate Levy measure: {0}")]
    DegenerateModel(String),

    #[error("integral diverges: {0}")]
    Integrability(String),

    #[error("tail is flat near level {level:e}; generalized inverse is not unique")]
    FlatTail { level: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (estimate {value:e}, error {error:e})")]
    Quadrature { a: f64, b: f64, value: f64, error: f64 },

    #[error("no sign change while bracketing {0}")]
    NoBracket(String),

    #[error("state diverged at step {step} (t = {time}, x = {value})")]
    Divergence { step: usize, time: f64, value: f64 },

    #[error("paths come from different trajectories: {0}")]
    Coupling(String),

    #[error("Laplace check unusable at r = {r}: sample mean of exp(-rZ) underflowed")]
    UnusableLaplace { r: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid probability vector: {0}")]
    InvalidPmf(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("distortion {requested} is infeasible; the minimum achievable distortion is {minimum}")]
    Infeasible { requested: f64, minimum: f64 },

    #[error("enumeration budget exceeded for {what}: needs {required:.3e} cells, limit {limit:.3e}")]
    Budget {
        what: String,
        required: f64,
        limit: f64,
    },

    #[error("solver did not converge after {iterations} iterations (final gap {gap:.3e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("typical set T_delta^n is empty for n = {n}, delta = {delta}; increase n or delta")]
    EmptyTypicalSet { n: usize, delta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is indefinite: smallest eigenvalue {min_eigenvalue:e} is below -1e-10")]
    Indefinite { min_eigenvalue: f64 },

    #[error("factor reconstruction error {error:e} exceeds tolerance")]
    InaccurateFactor { error: f64 },

    #[error("quadrature did not converge for lag {lag} (last change {last_change:e} at order {order})")]
    QuadratureNonconvergence { lag: usize, order: usize, last_change: f64 },

    #[error("channel Gram matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{0} did not converge")]
    NonConvergence(&'static str),

    #[error("drop {drop_index}: {rejected} of {attempted} fading trials rejected as ill-conditioned")]
    ExcessRejections { drop_index: u64, rejected: usize, attempted: usize },

    #[error("{failed} of {total} drops aborted (first failure: {first})")]
    RunFailed { failed: usize, total: usize, first: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

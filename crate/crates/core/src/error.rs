use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ground state did not converge after {iterations} iterations (commutator norm {residual:e})")]
    ScfNotConverged { iterations: usize, residual: f64 },

    #[error("degenerate frontier orbitals (gap {gap:e}); occupation is ambiguous")]
    DegenerateFrontier { gap: f64 },

    #[error("ground state is unstable: {0}")]
    UnstableGroundState(String),

    #[error("degenerate metric: <p,q> = {denom:e} at iteration {iteration}")]
    DegenerateMetric { denom: f64, iteration: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("dense oracle limited to {cap} sites, got {n}")]
    OracleTooLarge { n: usize, cap: usize },
}

impl Error {
    pub(crate) fn dims(what: &str, left: usize, right: usize) -> Self {
        Error::DimensionMismatch(format!("{what}: {left} vs {right}"))
    }
}

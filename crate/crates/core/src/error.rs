use thiserror::Error;

/// Errors produced by the core toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("invalid uncertainty set: {0}")]
    InvalidSet(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("induced chain is not unichain ({closed_classes} closed classes)")]
    Multichain { closed_classes: usize },

    #[error("singular linear system while solving for gain and bias")]
    Singular,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("1-D search on [{lo}, {hi}] did not converge (residual {residual:e})")]
    SearchFailed { lo: f64, hi: f64, residual: f64 },

    #[error("iterate diverged at iteration {iter} (norm {norm:e})")]
    Diverged { iter: usize, norm: f64 },

    #[error("oracle unsupported: {0}")]
    OracleUnsupported(String),

    #[error("sample source failure: {0}")]
    Source(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),

    #[error("kernel grid ends at tau = {available} but evolution needs tau = {required}")]
    KernelCoverage { available: f64, required: f64 },

    #[error("time quadrature did not converge: change {change:e} at {nodes} nodes")]
    Convergence { change: f64, nodes: usize },

    #[error("detection probability {probability:e} is too small to normalize")]
    ZeroProbability { probability: f64 },

    #[error("Weyl function support exceeds the sampling box: {0}")]
    GridAliasing(String),

    #[error("joint dimension {requested} exceeds cap {cap}")]
    DimensionCap { requested: usize, cap: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

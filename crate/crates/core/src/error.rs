use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index set of {dims} dimensions and order {order} has {cardinality} entries, above the cap of {cap}")]
    IndexSetTooLarge {
        dims: usize,
        order: usize,
        cardinality: u128,
        cap: usize,
    },

    #[error("symmetric eigensolver did not converge ({context})")]
    EigenFailure { context: String },

    #[error("function value at quadrature node {node:?} is not finite")]
    NonFiniteProjection { node: Vec<f64> },

    #[error("measurement Gram matrix is singular; are two measurement locations identical?")]
    SingularMeasurements,

    #[error("requested {requested} KL modes but only {achievable} eigenvalues are positive")]
    InsufficientRank { requested: usize, achievable: usize },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("characteristic speeds are not strictly signed: {0}")]
    NotHyperbolic(String),

    #[error("discrete weights lose positivity at cell {cell}, mode {mode}: reduce mu_hat or refine the grid")]
    WeightPositivity { cell: usize, mode: usize },

    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },

    #[error("stress-strain model: {0}")]
    Material(String),

    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

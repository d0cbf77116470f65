use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (non-positive dose, pk, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("record {index} has no exposure value but the joint model needs one")]
    MissingExposure { index: usize },

    #[error("dose {0} is not on the dose grid")]
    DoseNotInGrid(f64),

    #[error("dose grid is empty")]
    EmptyGrid,

    #[error("sampler initialization failed: {0}")]
    SamplerInit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! Bayesian dose escalation with a joint dose → exposure → toxicity model.
//!
//! The crate fits either the joint model or a dose-only logistic baseline
//! with a built-in adaptive Metropolis sampler, turns the posterior into
//! overdose-controlled escalation decisions, and simulates whole trials to
//! estimate a design's operating characteristics.

pub mod datasets;
pub mod decision;
pub mod error;
pub mod fit;
pub mod model;
pub mod quadrature;
pub mod sampler;
pub mod simulator;

pub use error::{Error, Result};
pub use fit::{fit, Design, Fit};
pub use model::{DoseGrid, ModelKind, ParameterPoint, PriorSpec, RateMethod, SubjectRecord, TrialDataset};

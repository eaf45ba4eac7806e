//! Separation estimation for two incoherent point sources measured by
//! Hermite-Gauss mode sorting, including moving sources.
//!
//! The crate computes mode detection probabilities, their averages over
//! source dynamics, Fisher information and Cramér-Rao bounds, a direct
//! imaging baseline, and a Monte Carlo harness with a maximum-likelihood
//! estimator.

pub mod cli;
pub mod config;
pub mod direct;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod montecarlo;

pub mod optics;
pub mod quadrature;
pub mod special;

pub use dynamics::{
    averaged_mode_probabilities, distribution_average, time_average, DynamicsModel,
    OscillationKind, PhiTrajectory,
};
pub use error::{Result, SpadeError};
pub use estimation::{cramer_rao_bound, fisher_information, FisherOptions, FisherResult};
pub use optics::{static_mode_probabilities, Cutoff, ModeIndex, ModeProbabilities, SourceGeometry};
pub use quadrature::QuadratureSpec;

//! Exact and Monte Carlo machinery for antiferromagnetic 2-spin systems and
//! ferromagnetic Potts models: partition functions and observables, phase
//! criticality, edge and field gadgets, reduction pipelines, interpolation
//! of log-partition functions and Glauber sampling.

pub mod criticality;
pub mod error;
pub mod exact;
pub mod gadgets;
pub mod graph;
pub mod interpolation;
pub mod model;
pub mod phase;
pub mod rational;
pub mod reduction;
pub mod sampler;

pub use error::{Error, Result};
pub use rational::Rational;

//! Mean-field limit law of a discrete-time recurrent network with correlated
//! Gaussian synaptic weights, and a finite-network simulation harness that
//! checks convergence to it.

pub mod cli;
pub mod error;
pub mod harness;
pub mod limit_law;
pub mod linalg;
pub mod model;
pub mod network;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod window;

pub use error::{Error, Result};
pub use limit_law::LimitLaw;
pub use model::{CovFunction, InitialLaw, ModelParams, SigmoidSpec};
pub use quadrature::QuadratureConfig;

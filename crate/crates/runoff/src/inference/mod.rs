//! Gradient-based MCMC over model-supplied log densities, with
//! convergence diagnostics and draw storage.

pub mod diagnostics;
pub mod draws;
pub mod hmc;
pub mod model;
pub mod params;

pub use diagnostics::{ess, rhat};
pub use draws::{DrawMatrix, SamplerMeta};
pub use hmc::{divergence_fraction, sample, SamplerConfig};
pub use model::{check_gradient, LogDensityModel};
pub use params::{Constraint, ParamSpec, ParameterSpace};

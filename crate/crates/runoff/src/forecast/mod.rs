//! Ultimate-loss-ratio forecasting: state-space models with measurement
//! error, hierarchical pooling across programs, data-driven priors, and
//! posterior prediction.

pub mod hierarchical;
pub mod moment;
pub mod predict;
pub mod priors;
pub mod state_space;

pub use hierarchical::{HierarchicalConfig, HierarchicalModel, ProgramInput};
pub use moment::lognormal_moment_match;
pub use predict::{forecast, forecast_program, ForecastDraws, ProgramNames, ProgramParams, ProgramView};
pub use priors::{derive_priors, DerivedPriors};
pub use state_space::{
    ForecastKind, ForecastModel, ForecastPriors, GaussianPrior, MeasurementErrorInput,
};

//! Simulation-based calibration, uniformity bands, and predictive checks.

pub mod band;
pub mod predictive;
pub mod rank;
pub mod sbc;

pub use band::{chi_square_statistic, uniform_band};
pub use predictive::{predictive_check, PredictiveCheck, PredictiveMode, Trajectory};
pub use rank::rank_statistic;
pub use sbc::{
    run_sbc, QuantitySummary, RankRecord, SbcConfig, SbcFamily, SbcReport, SimDiagnostics,
};

//! Bayesian loss development and forecasting for casualty insurance programs.
//!
//! The crate covers the full loss-modeling workflow for run-off triangles:
//!
//! - [`triangle`]: triangle data model, loss ratios, long-CSV ingestion.
//! - [`inference`]: Hamiltonian Monte Carlo over model-supplied log densities,
//!   split-R-hat / ESS diagnostics, draw storage.
//! - [`dev`]: chain-ladder (body) and generalized Bondy (tail) development
//!   models with forward simulation to ultimate losses.
//! - [`forecast`]: state-space random-walk and mean-reversion forecasters for
//!   ultimate loss ratios, lognormal measurement error, hierarchical pooling
//!   and data-driven prior derivation.
//! - [`validate`]: simulation-based calibration, rank histograms with exact
//!   binomial uniformity bands, prior/posterior predictive checks.
//! - [`backtest`]: leave-future-out backtests scored with LPD/ELPD, RMSE and
//!   predictive percentiles.
//! - [`stacking`]: MLE stacking of predictive distributions.
//! - [`cashflow`]: walk-back from ultimates to paid-loss path distributions.
//! - [`synth`]: synthetic triangle corpora for demos and self-tests.
//! - [`config`] / [`commands`]: the configuration schema and the orchestration
//!   entry points behind the thin `runoff` binary.
//!
//! See the crate examples for one runnable program per capability.

pub mod backtest;
pub mod cashflow;
pub mod commands;
pub mod config;
pub mod dev;
pub mod error;
pub mod forecast;
pub mod inference;
pub mod math;
pub mod seed;
pub mod stacking;
pub mod synth;
pub mod triangle;
pub mod validate;

pub use error::{Error, Result};
pub use triangle::{load_triangles, write_triangles, LossRatioSeries, Triangle};

//! Exact leave-future-out backtesting of the full modeling pipeline.

pub mod pipeline;
pub mod score;
pub mod split;

pub use pipeline::{run_backtest, BacktestConfig, BacktestOutput};
pub use score::{elpd_and_diff, lpd, percentile, rmse, ElpdComparison, ScoreRow, ScoreTable, Split};
pub use split::{make_split, BacktestSplit};

//! Leave-future-out splits of full-square triangles.

use crate::error::{Error, Result};
use crate::triangle::Triangle;

/// Train/test/validation decomposition of one full square, assuming the
/// lag-`M` column holds the ultimates (`y_i_inf = y_i(M)`).
#[derive(Debug, Clone)]
pub struct BacktestSplit {
    /// Run-off mask of the square: cells with `i + j <= N + 1`.
    pub train: Triangle,
    /// First-row ultimate `y_1(M)`, observed within the run-off.
    pub observed_ultimate: f64,
    /// `(accident_year, y_i(M))` for `i = 2..=N-1`, unseen in training.
    pub test_targets: Vec<(usize, f64)>,
    /// `(N, y_N(M))`: the future accident year.
    pub validation_target: (usize, f64),
}

/// Build the standard split. Requires a full square with `N = M >= 3`.
pub fn make_split(t: &Triangle) -> Result<BacktestSplit> {
    let n = t.n_accident_years();
    let m = t.n_dev_lags();
    if !t.is_full_square() || n != m {
        return Err(Error::validation(format!(
            "triangle {}: backtest split needs a full N x N square",
            t.id()
        )));
    }
    if n < 3 {
        return Err(Error::validation(format!(
            "triangle {}: backtest split needs N >= 3, got {n}",
            t.id()
        )));
    }
    let train = t.to_runoff(m)?;
    let observed_ultimate = t.cell(1, m).expect("full square");
    let test_targets =
        (2..n).map(|i| (i, t.cell(i, m).expect("full square"))).collect();
    let validation_target = (n, t.cell(n, m).expect("full square"));
    Ok(BacktestSplit { train, observed_ultimate, test_targets, validation_target })
}

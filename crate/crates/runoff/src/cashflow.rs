//! Underwriting cashflows: walk forecasted ultimates back through
//! development-factor draws to per-lag paid-loss paths.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::DrawMatrix;
use crate::math::quantile;

/// Per-draw cumulative paid-loss paths for one future accident year.
#[derive(Debug, Clone, PartialEq)]
pub struct CashflowPaths {
    pub triangle_id: String,
    pub accident_year: usize,
    /// Premium backing the year, for netting.
    pub premium: f64,
    /// `paths[s][j-1]` = cumulative paid loss at lag `j` under draw `s`;
    /// the last entry equals the input ultimate draw exactly.
    pub paths: Vec<Vec<f64>>,
}

impl CashflowPaths {
    pub fn n_draws(&self) -> usize {
        self.paths.len()
    }

    pub fn n_lags(&self) -> usize {
        self.paths.first().map_or(0, Vec::len)
    }

    /// `(triangle_id, accident_year, draw, dev_lag, paid_loss)` rows.
    pub fn write_csv(&self, writer: &mut csv::Writer<impl std::io::Write>) -> Result<()> {
        for (s, path) in self.paths.iter().enumerate() {
            for (j, v) in path.iter().enumerate() {
                writer.write_record([
                    self.triangle_id.as_str(),
                    &self.accident_year.to_string(),
                    &s.to_string(),
                    &(j + 1).to_string(),
                    &v.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    pub fn csv_header() -> [&'static str; 5] {
        ["triangle_id", "accident_year", "draw", "dev_lag", "paid_loss"]
    }
}

/// Development factors into lags `2..=M`, one row per draw, assembled from
/// the prediction regime: chain-ladder factors up to `tau`, Bondy-implied
/// `omega^(beta^j)` beyond.
pub fn prediction_factors(
    body: &DrawMatrix,
    tail: &DrawMatrix,
    n_dev_lags: usize,
    tau: usize,
) -> Result<Vec<Vec<f64>>> {
    if body.total_draws() != tail.total_draws() {
        return Err(Error::validation("body and tail draw counts must match"));
    }
    let alpha_idx: Vec<usize> = (1..n_dev_lags)
        .map(|k| body.index_of(&format!("log_alpha[{k}]")))
        .collect::<Result<_>>()?;
    let omega = tail.index_of("omega")?;
    let beta = tail.index_of("beta")?;
    let mut out = Vec::with_capacity(body.total_draws());
    for s in 0..body.total_draws() {
        let b = body.draw_flat(s);
        let t = tail.draw_flat(s);
        let mut factors = Vec::with_capacity(n_dev_lags - 1);
        for j in 2..=n_dev_lags {
            let f = if j <= tau {
                b[alpha_idx[j - 2]].exp()
            } else {
                t[omega].powf(t[beta].powi(j as i32))
            };
            factors.push(f);
        }
        out.push(factors);
    }
    Ok(out)
}

/// Walk each ultimate draw back through its paired factor draw:
/// `path[j] = path[j+1] / factor_into(j+1)`, deterministically per draw.
///
/// `factors[s][j-2]` is the age-to-age factor into lag `j`; draws must align
/// by index with `ultimates` so parameter and process uncertainty stay
/// coupled.
pub fn walkback(
    triangle_id: &str,
    accident_year: usize,
    premium: f64,
    ultimates: &[f64],
    factors: &[Vec<f64>],
) -> Result<CashflowPaths> {
    if ultimates.len() != factors.len() {
        return Err(Error::validation(format!(
            "{} ultimate draws but {} factor draws; draws must align by index",
            ultimates.len(),
            factors.len()
        )));
    }
    if ultimates.is_empty() {
        return Err(Error::validation("walkback needs at least one draw"));
    }
    let m = factors[0].len() + 1;
    let mut paths = Vec::with_capacity(ultimates.len());
    for (s, (&ult, fs)) in ultimates.iter().zip(factors).enumerate() {
        if fs.len() != m - 1 {
            return Err(Error::validation(format!("draw {s}: ragged factor row")));
        }
        if !ult.is_finite() || ult <= 0.0 {
            return Err(Error::validation(format!("draw {s}: ultimate {ult} must be positive")));
        }
        let mut path = vec![0.0; m];
        path[m - 1] = ult;
        for j in (0..m - 1).rev() {
            let f = fs[j];
            if !f.is_finite() || f <= 0.0 {
                return Err(Error::validation(format!(
                    "draw {s}: factor into lag {} is {f}, must be positive",
                    j + 2
                )));
            }
            path[j] = path[j + 1] / f;
        }
        paths.push(path);
    }
    Ok(CashflowPaths {
        triangle_id: triangle_id.to_string(),
        accident_year,
        premium,
        paths,
    })
}

/// Per-lag quantiles of paid losses and of the net position (premium - paid).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CashflowSummary {
    pub triangle_id: String,
    pub accident_year: usize,
    pub quantiles: Vec<f64>,
    /// `paid[j-1][q]` = q-th requested quantile of paid loss at lag `j`.
    pub paid: Vec<Vec<f64>>,
    /// `net[j-1][q]` = q-th requested quantile of `premium - paid` at lag `j`.
    pub net: Vec<Vec<f64>>,
}

impl CashflowSummary {
    /// `(triangle_id, accident_year, dev_lag, quantile, paid_loss, net_position)` rows.
    pub fn write_csv(&self, writer: &mut csv::Writer<impl std::io::Write>) -> Result<()> {
        for (j, (paid, net)) in self.paid.iter().zip(&self.net).enumerate() {
            for (q, (&p, &n)) in self.quantiles.iter().zip(paid.iter().zip(net)) {
                writer.write_record([
                    self.triangle_id.as_str(),
                    &self.accident_year.to_string(),
                    &(j + 1).to_string(),
                    &q.to_string(),
                    &p.to_string(),
                    &n.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    pub fn csv_header() -> [&'static str; 6] {
        ["triangle_id", "accident_year", "dev_lag", "quantile", "paid_loss", "net_position"]
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Summarize paths into per-lag quantile tables (linear interpolation
/// between order statistics).
pub fn cashflow_summary(paths: &CashflowPaths, quantiles: &[f64]) -> Result<CashflowSummary> {
    if quantiles.is_empty() {
        return Err(Error::validation("at least one quantile required"));
    }
    if quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::validation("quantiles must lie in [0, 1]"));
    }
    let m = paths.n_lags();
    let mut paid = Vec::with_capacity(m);
    let mut net = Vec::with_capacity(m);
    let mut lag_values = Vec::with_capacity(paths.n_draws());
    for j in 0..m {
        lag_values.clear();
        lag_values.extend(paths.paths.iter().map(|p| p[j]));
        lag_values.sort_by(|a, b| a.total_cmp(b));
        paid.push(quantiles.iter().map(|&q| quantile(&lag_values, q)).collect());
        let mut nets: Vec<f64> = lag_values.iter().map(|v| paths.premium - v).collect();
        nets.sort_by(|a, b| a.total_cmp(b));
        net.push(quantiles.iter().map(|&q| quantile(&nets, q)).collect());
    }
    Ok(CashflowSummary {
        triangle_id: paths.triangle_id.clone(),
        accident_year: paths.accident_year,
        quantiles: quantiles.to_vec(),
        paid,
        net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn single_step_arithmetic() {
        let got = walkback("T1", 11, 1200.0, &[1000.0], &[vec![2.0, 1.25]]).unwrap();
        // Factor into the last lag is 1.25: previous value 800.
        assert_eq!(got.paths[0], vec![400.0, 800.0, 1000.0]);
    }

    #[test]
    fn identity_factors_flat_path() {
        let got = walkback("T1", 11, 500.0, &[777.0, 888.0], &[vec![1.0; 9], vec![1.0; 9]]).unwrap();
        assert!(got.paths[0].iter().all(|&v| v == 777.0));
        assert!(got.paths[1].iter().all(|&v| v == 888.0));
    }

    #[test]
    fn round_trip_reproduces_ultimates() {
        let mut rng = crate::seed::stream_rng(71, 0);
        let n_draws = 1000;
        let m = 10;
        let mut ults = Vec::with_capacity(n_draws);
        let mut factors = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            ults.push((rng.sample::<f64, _>(StandardNormal) * 0.3 + 7.0).exp());
            factors.push(
                (2..=m)
                    .map(|_| 1.0 + rng.random::<f64>())
                    .collect::<Vec<f64>>(),
            );
        }
        let got = walkback("T1", 11, 1000.0, &ults, &factors).unwrap();
        for (s, path) in got.paths.iter().enumerate() {
            let mut forward = path[0];
            for f in &factors[s] {
                forward *= f;
            }
            assert!(
                (forward - ults[s]).abs() <= 1e-12 * ults[s],
                "draw {s}: {forward} vs {}",
                ults[s]
            );
            assert_eq!(path[m - 1], ults[s]);
        }
    }

    #[test]
    fn monotone_paths_for_factors_above_one() {
        let factors = vec![vec![1.5, 1.2, 1.05, 1.0]];
        let got = walkback("T1", 11, 100.0, &[250.0], &factors).unwrap();
        for w in got.paths[0].windows(2) {
            assert!(w[0] <= w[1], "{:?}", got.paths[0]);
        }
    }

    #[test]
    fn coupling_matters() {
        // Ultimates positively correlated with factors: shuffling the factor
        // draws changes the dispersion of the first-lag value.
        let n = 2000;
        let mut rng = crate::seed::stream_rng(72, 0);
        let mut ults = Vec::with_capacity(n);
        let mut factors = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            ults.push((7.0 + 0.5 * z).exp());
            factors.push(vec![(0.5 + 0.45 * z).exp()]);
        }
        let coupled = walkback("T1", 1, 1.0, &ults, &factors).unwrap();
        let mut shuffled = factors.clone();
        shuffled.rotate_left(1);
        let decoupled = walkback("T1", 1, 1.0, &ults, &shuffled).unwrap();
        let first = |paths: &CashflowPaths| {
            let xs: Vec<f64> = paths.paths.iter().map(|p| p[0].ln()).collect();
            crate::math::mean_sd(&xs).1
        };
        let sd_coupled = first(&coupled);
        let sd_decoupled = first(&decoupled);
        // log path[0] = log ult - log factor: coupled variance is
        // (0.5 - 0.45)^2 = 0.0025, decoupled is 0.5^2 + 0.45^2 = 0.4525.
        assert!(
            sd_decoupled > 5.0 * sd_coupled,
            "coupled sd {sd_coupled}, decoupled sd {sd_decoupled}"
        );
    }

    #[test]
    fn quantile_conventions() {
        let paths = walkback("T1", 11, 1000.0, &[800.0, 1200.0], &[vec![1.0], vec![1.0]]).unwrap();
        let summary = cashflow_summary(&paths, &[0.5]).unwrap();
        assert_eq!(summary.paid[0][0], 1000.0);
        assert_eq!(summary.paid[1][0], 1000.0);
        assert_eq!(summary.net[0][0], 0.0);

        let single = walkback("T1", 11, 1000.0, &[900.0], &[vec![1.5]]).unwrap();
        let s = cashflow_summary(&single, &[0.1, 0.5, 0.9]).unwrap();
        assert!(s.paid[1].iter().all(|&v| v == 900.0));
        assert!(s.paid[0].iter().all(|&v| v == 600.0));
    }

    #[test]
    fn lognormal_quantiles_match_analytic() {
        let mut rng = crate::seed::stream_rng(73, 0);
        let n = 200_000;
        let (mu, sigma) = (6.0, 0.4);
        let ults: Vec<f64> =
            (0..n).map(|_| (mu + sigma * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
        let factors = vec![vec![1.25]; n];
        let paths = walkback("T1", 11, 500.0, &ults, &factors).unwrap();
        let summary = cashflow_summary(&paths, &[0.05, 0.5, 0.95]).unwrap();
        // Lag 2 holds the ultimates themselves; lag 1 divides by 1.25.
        let z95 = 1.6448536269514722;
        for (q_idx, z) in [(0usize, -z95), (1, 0.0), (2, z95)] {
            let expect = (mu + sigma * z).exp();
            let got = summary.paid[1][q_idx];
            assert!(
                (got - expect).abs() < 0.01 * expect,
                "q{q_idx}: {got} vs {expect}"
            );
            let got1 = summary.paid[0][q_idx];
            assert!((got1 - expect / 1.25).abs() < 0.01 * expect);
        }
    }

    #[test]
    fn misalignment_and_bad_inputs_rejected() {
        assert!(walkback("T", 1, 1.0, &[1.0, 2.0], &[vec![1.0]]).is_err());
        assert!(walkback("T", 1, 1.0, &[1.0], &[vec![0.0]]).is_err());
        assert!(walkback("T", 1, 1.0, &[-1.0], &[vec![1.0]]).is_err());
        let paths = walkback("T", 1, 1.0, &[1.0], &[vec![1.0]]).unwrap();
        assert!(cashflow_summary(&paths, &[]).is_err());
        assert!(cashflow_summary(&paths, &[1.5]).is_err());
    }
}

//! Prior and posterior predictive checks for the development stage.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dev::DevConfig;
use crate::error::{Error, Result};
use crate::inference::DrawMatrix;
use crate::math::quantile;
use crate::seed::stream_rng;
use crate::triangle::Triangle;

/// Whether the supplied draws come from the prior or a posterior fit; recorded
/// in the output for plot labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictiveMode {
    Prior,
    Posterior,
}

/// One simulated development path for one accident year.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub realization: usize,
    pub accident_year: usize,
    /// Simulated cumulative losses at lags `1..=M`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictiveCheck {
    pub mode: PredictiveMode,
    pub trajectories: Vec<Trajectory>,
    /// Fraction of observed cells (lag >= 2) inside the central 50% interval
    /// of their one-step-ahead predictive distribution.
    pub coverage50: f64,
    /// As above for the central 90% interval.
    pub coverage90: f64,
    pub n_cells: usize,
}

impl PredictiveCheck {
    /// Overlay CSV ready for external plotting:
    /// `(triangle_id, realization, accident_year, dev_lag, value)`.
    pub fn write_trajectories_csv(
        &self,
        writer: &mut csv::Writer<impl std::io::Write>,
        triangle_id: &str,
    ) -> Result<()> {
        for t in &self.trajectories {
            for (j, v) in t.values.iter().enumerate() {
                writer.write_record([
                    triangle_id,
                    &t.realization.to_string(),
                    &t.accident_year.to_string(),
                    &(j + 1).to_string(),
                    &v.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    pub fn csv_header() -> [&'static str; 5] {
        ["triangle_id", "realization", "accident_year", "dev_lag", "value"]
    }
}

/// Simulate development trajectories and per-cell coverage statistics.
///
/// Trajectories start from each accident year's first observed cell and run
/// the body/tail regimes out to lag `M` (`n_realizations` draw indices,
/// evenly spaced). Coverage compares each observed cell at lag `j >= 2`
/// against its one-step-ahead predictive distribution given the previous
/// observed cell, across all supplied draws.
pub fn predictive_check(
    body: &DrawMatrix,
    tail: &DrawMatrix,
    triangle: &Triangle,
    cfg: &DevConfig,
    mode: PredictiveMode,
    n_realizations: usize,
    seed: u64,
) -> Result<PredictiveCheck> {
    cfg.validate(triangle.n_dev_lags())?;
    let s_total = body.total_draws();
    if s_total != tail.total_draws() {
        return Err(Error::validation("body and tail draw counts must match"));
    }
    if n_realizations == 0 || n_realizations > s_total {
        return Err(Error::validation(format!(
            "need 1..={s_total} realizations, got {n_realizations}"
        )));
    }

    let m = triangle.n_dev_lags();
    let ratios = triangle.loss_ratios().values;
    let params = DrawParams::extract(body, tail, m)?;

    // Overlay trajectories.
    let mut trajectories = Vec::with_capacity(n_realizations * ratios.len());
    for k in 0..n_realizations {
        let s = k * s_total / n_realizations;
        let mut rng = stream_rng(seed, s as u64);
        for (idx, row) in ratios.iter().enumerate() {
            let mut values = Vec::with_capacity(m);
            let mut value = row[0];
            values.push(value * triangle.premium(idx + 1));
            for j in 2..=m {
                let (mu, sigma) = params.step(s, cfg.tau, j, value);
                let z: f64 = rng.sample(StandardNormal);
                value = (mu + sigma * z).exp();
                values.push(value * triangle.premium(idx + 1));
            }
            trajectories.push(Trajectory { realization: k, accident_year: idx + 1, values });
        }
    }

    // One-step-ahead coverage over observed cells.
    let mut inside50 = 0usize;
    let mut inside90 = 0usize;
    let mut n_cells = 0usize;
    let mut rng = stream_rng(seed, u64::MAX - 1);
    let mut preds = Vec::with_capacity(s_total);
    for (idx, row) in ratios.iter().enumerate() {
        for j in 2..=row.len() {
            let prev = row[j - 2];
            let observed = row[j - 1];
            preds.clear();
            for s in 0..s_total {
                let (mu, sigma) = params.step(s, cfg.tau, j, prev);
                let z: f64 = rng.sample(StandardNormal);
                preds.push((mu + sigma * z).exp());
            }
            preds.sort_by(|a, b| a.total_cmp(b));
            n_cells += 1;
            if observed >= quantile(&preds, 0.25) && observed <= quantile(&preds, 0.75) {
                inside50 += 1;
            }
            if observed >= quantile(&preds, 0.05) && observed <= quantile(&preds, 0.95) {
                inside90 += 1;
            }
            let _ = idx;
        }
    }

    Ok(PredictiveCheck {
        mode,
        trajectories,
        coverage50: inside50 as f64 / n_cells.max(1) as f64,
        coverage90: inside90 as f64 / n_cells.max(1) as f64,
        n_cells,
    })
}

struct DrawParams {
    log_alpha: Vec<Vec<f64>>,
    gamma: Vec<(f64, f64)>,
    tail: Vec<(f64, f64, f64, f64)>,
}

impl DrawParams {
    fn extract(body: &DrawMatrix, tail: &DrawMatrix, m: usize) -> Result<Self> {
        let alpha_idx: Vec<usize> = (1..m)
            .map(|k| body.index_of(&format!("log_alpha[{k}]")))
            .collect::<Result<_>>()?;
        let g1 = body.index_of("gamma1")?;
        let g2 = body.index_of("gamma2")?;
        let omega = tail.index_of("omega")?;
        let beta = tail.index_of("beta")?;
        let l1 = tail.index_of("lambda1")?;
        let l2 = tail.index_of("lambda2")?;
        let mut la = Vec::with_capacity(body.total_draws());
        let mut gamma = Vec::with_capacity(body.total_draws());
        let mut tl = Vec::with_capacity(body.total_draws());
        for s in 0..body.total_draws() {
            let b = body.draw_flat(s);
            let t = tail.draw_flat(s);
            la.push(alpha_idx.iter().map(|&q| b[q]).collect());
            gamma.push((b[g1], b[g2]));
            tl.push((t[omega].ln(), t[beta], t[l1], t[l2]));
        }
        Ok(Self { log_alpha: la, gamma, tail: tl })
    }

    /// `(mu, sigma)` of the lag `j` transition from `prev` under draw `s`.
    fn step(&self, s: usize, tau: usize, j: usize, prev: f64) -> (f64, f64) {
        if j <= tau {
            let (g1, g2) = self.gamma[s];
            (
                self.log_alpha[s][j - 2] + prev.ln(),
                crate::dev::dev_sigma(g1, g2, j, prev),
            )
        } else {
            let (u, beta, l1, l2) = self.tail[s];
            (u * beta.powi(j as i32) + prev.ln(), crate::dev::dev_sigma(l1, l2, j, prev))
        }
    }
}

//! Synthetic triangle corpora for demos, self-tests and calibration runs.
//!
//! Ultimate loss ratios follow the state-space generative model (random walk
//! or mean reversion on the latent log ratio, lognormal observation noise);
//! earlier development lags are walked back from each ultimate through a
//! fixed age-to-age pattern with per-cell lognormal noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::seed::stream_rng;
use crate::triangle::Triangle;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_triangles: usize,
    /// Accident years = development lags (full squares).
    pub n_years: usize,
    pub line: String,
    /// Premium per accident year, drawn log-uniformly per triangle.
    pub premium_range: (f64, f64),
    /// Initial latent log loss ratio across triangles: mean and sd.
    pub eta0_mean: f64,
    pub eta0_sd: f64,
    /// Latent innovation sd per accident year.
    pub eps: f64,
    /// Observation noise on the log ultimate ratio.
    pub obs_sigma: f64,
    /// `Some((phi, mu))` switches the latent process to mean reversion.
    pub reversion: Option<(f64, f64)>,
    /// Age-to-age factors into lags `2..=M` (length `n_years - 1`).
    pub dev_factors: Vec<f64>,
    /// Per-cell lognormal noise on the development walk-back.
    pub dev_noise: f64,
    pub seed: u64,
}

impl CorpusSpec {
    /// A drifting random-walk book: visible year-over-year movement with a
    /// medium-tailed payout pattern.
    pub fn random_walk(n_triangles: usize, n_years: usize, seed: u64) -> Self {
        Self {
            n_triangles,
            n_years,
            line: "SYN".to_string(),
            premium_range: (500.0, 5000.0),
            eta0_mean: -0.45,
            eta0_sd: 0.25,
            eps: 0.18,
            obs_sigma: 0.06,
            reversion: None,
            dev_factors: default_pattern(n_years),
            dev_noise: 0.03,
            seed,
        }
    }
}

/// A decaying age-to-age pattern reaching ~1 near the last lag.
pub fn default_pattern(n_years: usize) -> Vec<f64> {
    (2..=n_years).map(|j| 1.0 + 0.9f64 * 0.55f64.powi(j as i32 - 1)).collect()
}

/// Generate full-square triangles per the spec.
pub fn corpus(spec: &CorpusSpec) -> Result<Vec<Triangle>> {
    let n = spec.n_years;
    assert_eq!(spec.dev_factors.len(), n - 1, "one factor per lag transition");
    let mut out = Vec::with_capacity(spec.n_triangles);
    for g in 0..spec.n_triangles {
        let mut rng = stream_rng(spec.seed, g as u64);
        let (lo, hi) = spec.premium_range;
        let premium = (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp();

        let mut eta = spec.eta0_mean + spec.eta0_sd * rng.sample::<f64, _>(StandardNormal);
        let mut ultimates = Vec::with_capacity(n);
        for _ in 0..n {
            eta = match spec.reversion {
                None => eta + spec.eps * rng.sample::<f64, _>(StandardNormal),
                Some((phi, mu)) => {
                    mu * (1.0 - phi) + phi * eta + spec.eps * rng.sample::<f64, _>(StandardNormal)
                }
            };
            let r = (eta + spec.obs_sigma * rng.sample::<f64, _>(StandardNormal)).exp();
            ultimates.push(r * premium);
        }

        let mut rows = Vec::with_capacity(n);
        for &ult in &ultimates {
            let mut row = vec![0.0; n];
            row[n - 1] = ult;
            for j in (0..n - 1).rev() {
                let noise = (spec.dev_noise * rng.sample::<f64, _>(StandardNormal)).exp();
                row[j] = row[j + 1] / (spec.dev_factors[j] * noise);
            }
            rows.push(row);
        }
        out.push(Triangle::new(
            format!("{}{:03}", spec.line, g + 1),
            spec.line.clone(),
            rows,
            vec![premium; n],
            (1..=n as i64).collect(),
        )?);
    }
    Ok(out)
}

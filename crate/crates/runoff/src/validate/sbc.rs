//! Simulation-based calibration: fit the model to many prior-predictive
//! datasets and rank true quantities within their posteriors.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dev::{
    sample_dev_prior, simulate_development, BondyModel, ChainLadderModel, DevConfig,
};
use crate::error::{Error, Result};
use crate::forecast::{
    ForecastKind, ForecastModel, ForecastPriors, MeasurementErrorInput,
};
use crate::inference::{divergence_fraction, rhat, sample, SamplerConfig};
use crate::seed::{derive, stream_rng};
use crate::triangle::Triangle;
use crate::validate::band::uniform_band;
use crate::validate::rank::rank_statistic;

/// Which model family a calibration run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SbcFamily {
    /// Chain-ladder body + generalized Bondy tail on simulated triangles.
    Dev,
    /// State-space forecaster on simulated measurement inputs.
    Forecast { kind: ForecastKind },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbcConfig {
    pub family: SbcFamily,
    /// Accident years = development lags of each simulated triangle.
    pub n_years: usize,
    pub n_sims: usize,
    pub dev: DevConfig,
    pub sampler: SamplerConfig,
    /// Target number of retained (thinned) draws per fit.
    pub thin_to: usize,
    pub bins: usize,
    pub band_level: f64,
    /// Likelihood scale multiplier applied at fit time only; 1.0 means the
    /// fitted model matches the generator, 0.5 is the over-confidence probe.
    pub fit_sigma_scale: f64,
    pub seed: u64,
    /// Exclusion thresholds for non-converged fits.
    pub rhat_max: f64,
    pub divergence_max: f64,
}

impl SbcConfig {
    /// Desk-scale defaults for an `n_years` x `n_years` dev-model run.
    pub fn dev_defaults(n_years: usize, n_sims: usize) -> Self {
        let tau = n_years / 2;
        let dev = DevConfig { tau, rho: (tau + 1, n_years), j_max: n_years, kappa: 1.0 };
        Self {
            family: SbcFamily::Dev,
            n_years,
            n_sims,
            dev,
            sampler: SamplerConfig { chains: 2, warmup: 500, draws: 500, ..Default::default() },
            thin_to: 100,
            bins: 20,
            band_level: 0.99,
            fit_sigma_scale: 1.0,
            seed: 0,
            rhat_max: 1.05,
            divergence_max: 0.05,
        }
    }

    pub fn forecast_defaults(kind: ForecastKind, n_years: usize, n_sims: usize) -> Self {
        Self { family: SbcFamily::Forecast { kind }, ..Self::dev_defaults(n_years, n_sims) }
    }
}

/// Rank of one true quantity within one simulation's thinned posterior.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankRecord {
    pub quantity: String,
    pub sim: usize,
    pub true_value: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QuantitySummary {
    pub quantity: String,
    pub histogram: Vec<u64>,
    pub band: (u64, u64),
    pub violated_bins: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimDiagnostics {
    pub sim: usize,
    pub max_rhat: f64,
    pub divergence_fraction: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SbcReport {
    /// Maximum attainable rank (the retained draw count per fit).
    pub max_rank: usize,
    pub n_sims: usize,
    pub n_excluded: usize,
    /// Set when more than 20% of simulations were excluded.
    pub unreliable: bool,
    pub records: Vec<RankRecord>,
    pub summaries: Vec<QuantitySummary>,
    pub diagnostics: Vec<SimDiagnostics>,
}

impl SbcReport {
    pub fn summary(&self, quantity: &str) -> Option<&QuantitySummary> {
        self.summaries.iter().find(|s| s.quantity == quantity)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Per-quantity rank CSV: `(quantity, sim, true_value, rank)`.
    pub fn write_ranks_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record(["quantity", "sim", "true_value", "rank"])?;
        for r in &self.records {
            writer.write_record([
                r.quantity.as_str(),
                &r.sim.to_string(),
                &r.true_value.to_string(),
                &r.rank.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

struct SimOutcome {
    diag: SimDiagnostics,
    ranks: Vec<(String, f64, usize)>,
}

/// Run the calibration loop. Each simulation draws parameters from the
/// prior, simulates a dataset, refits with the same priors, thins, and ranks
/// every tracked quantity (parameters, held-out ultimates and the joint log
/// likelihood for the dev family). Simulations whose fits exceed the R-hat
/// or divergence thresholds are excluded and counted.
pub fn run_sbc(cfg: &SbcConfig) -> Result<SbcReport> {
    if cfg.n_sims < 50 {
        return Err(Error::validation(format!("SBC needs at least 50 simulations, got {}", cfg.n_sims)));
    }
    if cfg.n_years < 4 {
        return Err(Error::validation("SBC triangles need at least 4 years"));
    }
    cfg.dev.validate(cfg.n_years)?;
    cfg.sampler.validate()?;
    let total = cfg.sampler.chains * cfg.sampler.draws;
    if cfg.thin_to == 0 || cfg.thin_to > total {
        return Err(Error::validation(format!(
            "thin target {} not reachable from {total} draws",
            cfg.thin_to
        )));
    }

    let outcomes: Result<Vec<SimOutcome>> = (0..cfg.n_sims)
        .into_par_iter()
        .map(|sim| match cfg.family {
            SbcFamily::Dev => run_dev_sim(cfg, sim),
            SbcFamily::Forecast { kind } => run_forecast_sim(cfg, kind, sim),
        })
        .collect();
    let outcomes = outcomes?;

    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut n_excluded = 0;
    for outcome in outcomes {
        if outcome.diag.excluded {
            n_excluded += 1;
        } else {
            for (quantity, true_value, rank) in outcome.ranks {
                records.push(RankRecord { quantity, sim: outcome.diag.sim, true_value, rank });
            }
        }
        diagnostics.push(outcome.diag);
    }
    let kept = cfg.n_sims - n_excluded;
    let unreliable = n_excluded * 5 > cfg.n_sims;

    let max_rank = thin_stride_draws(cfg).1;
    let mut summaries = Vec::new();
    if kept >= cfg.bins {
        let band = uniform_band(kept, cfg.bins, cfg.band_level)?;
        let mut names: Vec<String> = Vec::new();
        for r in &records {
            if !names.contains(&r.quantity) {
                names.push(r.quantity.clone());
            }
        }
        for name in names {
            let mut histogram = vec![0u64; cfg.bins];
            for r in records.iter().filter(|r| r.quantity == name) {
                let bin = (r.rank * cfg.bins) / (max_rank + 1);
                histogram[bin.min(cfg.bins - 1)] += 1;
            }
            let violated_bins =
                histogram.iter().filter(|&&c| c < band.0 || c > band.1).count();
            summaries.push(QuantitySummary { quantity: name, histogram, band, violated_bins });
        }
    }

    Ok(SbcReport {
        max_rank,
        n_sims: cfg.n_sims,
        n_excluded,
        unreliable,
        records,
        summaries,
        diagnostics,
    })
}

/// Thinning stride and the resulting retained draw count.
fn thin_stride_draws(cfg: &SbcConfig) -> (usize, usize) {
    let stride = ((cfg.sampler.chains * cfg.sampler.draws) / cfg.thin_to).max(1);
    let kept_per_chain = cfg.sampler.draws / stride;
    (stride, cfg.sampler.chains * kept_per_chain)
}

const SIM_PREMIUM: f64 = 1000.0;
const SIM_FIRST_RATIO: f64 = 0.3;

fn run_dev_sim(cfg: &SbcConfig, sim: usize) -> Result<SimOutcome> {
    let sim_seed = derive(cfg.seed, sim as u64);
    let mut rng = stream_rng(sim_seed, 0);
    let n = cfg.n_years;

    // Draw generating parameters and a full-square dataset; retry the rare
    // numerically exploding path.
    let mut attempt = 0;
    let (cl, bondy, square) = loop {
        let (cl, bondy) = sample_dev_prior(&cfg.dev, n, &mut rng);
        if let Some(square) = simulate_square(&cl, &bondy, cfg, &mut rng) {
            break (cl, bondy, square);
        }
        attempt += 1;
        if attempt > 100 {
            return Err(Error::computation(format!(
                "sim {sim}: no finite prior-predictive triangle in 100 attempts"
            )));
        }
    };

    let rows: Vec<Vec<f64>> = square.iter().map(|r| r.iter().map(|v| v * SIM_PREMIUM).collect()).collect();
    let full = Triangle::new(
        format!("sbc{sim}"),
        "SIM",
        rows,
        vec![SIM_PREMIUM; n],
        (1..=n as i64).collect(),
    )?;
    let runoff = full.to_runoff(n)?;

    let body_model = ChainLadderModel::new(&runoff, &cfg.dev)?.with_sigma_scale(cfg.fit_sigma_scale);
    let tail_model = BondyModel::new(&runoff, &cfg.dev)?.with_sigma_scale(cfg.fit_sigma_scale);
    let body = sample(&body_model, &cfg.sampler.clone().with_seed(derive(sim_seed, 1)))?;
    let tail = sample(&tail_model, &cfg.sampler.clone().with_seed(derive(sim_seed, 2)))?;

    // Convergence gate on the raw fits.
    let mut max_rhat = 0.0f64;
    for d in [&body, &tail] {
        for name in d.names() {
            if let Ok(r) = rhat(d, name) {
                max_rhat = max_rhat.max(r);
            }
        }
    }
    let div_frac = divergence_fraction(&body).max(divergence_fraction(&tail));
    let excluded = max_rhat > cfg.rhat_max || div_frac > cfg.divergence_max;
    let diag = SimDiagnostics { sim, max_rhat, divergence_fraction: div_frac, excluded };
    if excluded {
        return Ok(SimOutcome { diag, ranks: Vec::new() });
    }

    let (stride, _) = thin_stride_draws(cfg);
    let body_thin = body.thin(stride)?;
    let tail_thin = tail.thin(stride)?;

    let mut ranks = Vec::new();
    let mut rank_of = |name: &str, truth: f64, draws: &[f64], rng: &mut rand_chacha::ChaCha8Rng| {
        ranks.push((name.to_string(), truth, rank_statistic(truth, draws, rng)));
    };
    let mut tie_rng = stream_rng(sim_seed, 3);
    for (k, &la) in cl.log_alpha.iter().enumerate() {
        rank_of(
            &format!("log_alpha[{}]", k + 1),
            la,
            &body_thin.quantity_draws(&format!("log_alpha[{}]", k + 1))?,
            &mut tie_rng,
        );
    }
    rank_of("gamma1", cl.gamma1, &body_thin.quantity_draws("gamma1")?, &mut tie_rng);
    rank_of("gamma2", cl.gamma2, &body_thin.quantity_draws("gamma2")?, &mut tie_rng);
    rank_of("omega", bondy.omega(), &tail_thin.quantity_draws("omega")?, &mut tie_rng);
    rank_of("beta", bondy.beta(), &tail_thin.quantity_draws("beta")?, &mut tie_rng);
    rank_of("lambda1", bondy.lambda1, &tail_thin.quantity_draws("lambda1")?, &mut tie_rng);
    rank_of("lambda2", bondy.lambda2, &tail_thin.quantity_draws("lambda2")?, &mut tie_rng);

    // Held-out ultimates: posterior predictive of the masked right edge.
    let pred = simulate_development(&body_thin, &tail_thin, &runoff, &cfg.dev, derive(sim_seed, 4))?;
    for i in 2..=n {
        rank_of(
            &format!("ultimate[{i}]"),
            square[i - 1][n - 1],
            &pred.draws[i - 1],
            &mut tie_rng,
        );
    }

    // Joint log likelihood as a data-space test quantity; the chain-ladder
    // and Bondy draws pair by thinned index.
    let like_body = ChainLadderModel::new(&runoff, &cfg.dev)?;
    let like_tail = BondyModel::new(&runoff, &cfg.dev)?;
    let truth_ll = like_body.log_likelihood(&cl) + like_tail.log_likelihood(&bondy);
    let ll_draws: Vec<f64> = (0..body_thin.total_draws())
        .map(|s| {
            let b = like_body.params_from_constrained(body_thin.draw_flat(s));
            let t = like_tail.params_from_constrained(tail_thin.draw_flat(s));
            like_body.log_likelihood(&b) + like_tail.log_likelihood(&t)
        })
        .collect();
    rank_of("joint_loglik", truth_ll, &ll_draws, &mut tie_rng);

    Ok(SimOutcome { diag, ranks })
}

/// Forward-simulate a full square of loss ratios from fixed parameters.
/// Returns `None` when a path leaves (0, 1e12).
fn simulate_square(
    cl: &crate::dev::ChainLadderParams,
    bondy: &crate::dev::BondyParams,
    cfg: &SbcConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Option<Vec<Vec<f64>>> {
    let n = cfg.n_years;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(n);
        let mut value = SIM_FIRST_RATIO;
        row.push(value);
        for j in 2..=n {
            let (mu, sigma) = if j <= cfg.dev.tau {
                (
                    cl.log_alpha[j - 2] + value.ln(),
                    crate::dev::dev_sigma(cl.gamma1, cl.gamma2, j, value),
                )
            } else {
                (
                    bondy.log_omega * bondy.beta().powi(j as i32) + value.ln(),
                    crate::dev::dev_sigma(bondy.lambda1, bondy.lambda2, j, value),
                )
            };
            let z: f64 = rng.sample(StandardNormal);
            value = (mu + sigma * z).exp();
            if !value.is_finite() || value <= 0.0 || value > 1e12 {
                return None;
            }
            row.push(value);
        }
        rows.push(row);
    }
    Some(rows)
}

fn run_forecast_sim(cfg: &SbcConfig, kind: ForecastKind, sim: usize) -> Result<SimOutcome> {
    let sim_seed = derive(cfg.seed, sim as u64);
    let mut rng = stream_rng(sim_seed, 0);
    let n = cfg.n_years;
    let priors = ForecastPriors::defaults(cfg.dev.kappa);
    let (prior_mean, prior_sd, s_meas) = (0.7, 0.15, 0.1);
    let (pm, ps) = crate::forecast::lognormal_moment_match(prior_mean, prior_sd)?;

    let mut normal = |m: f64, s: f64| m + s * rng.sample::<f64, _>(StandardNormal);
    let eta0 = normal(priors.eta0.location, priors.eta0.scale);
    let le = normal(priors.log_eps.location, priors.log_eps.scale);
    let eps = le.exp();
    let g1 = normal(priors.fc_gamma.location, priors.fc_gamma.scale);
    let g2 = normal(priors.fc_gamma.location, priors.fc_gamma.scale);
    let (mu, f) = (normal(priors.mu.location, priors.mu.scale), normal(priors.logit_phi.location, priors.logit_phi.scale));
    let phi = crate::inference::params::logistic(f);

    let premiums = vec![SIM_PREMIUM; n];
    let mut eta = Vec::with_capacity(n);
    let mut prev = eta0;
    for _ in 0..n {
        let mean = match kind {
            ForecastKind::RandomWalk => prev,
            ForecastKind::MeanReversion => mu * (1.0 - phi) + phi * prev,
        };
        let v = normal(mean, eps);
        eta.push(v);
        prev = v;
    }
    // Latent true ratios from the product of the observation density and the
    // moment-matched prior (both normal in log space).
    let mut t = Vec::with_capacity(n);
    let mut m_obs = Vec::with_capacity(n);
    for i in 0..n {
        let s2 = crate::forecast::state_space::obs_sigma_sq(g1, g2, premiums[i]);
        let prec = 1.0 / s2 + 1.0 / (ps * ps);
        let mean = (eta[i] / s2 + pm / (ps * ps)) / prec;
        let ti = normal(mean, (1.0 / prec).sqrt());
        t.push(ti);
        let r = ti.exp();
        let mu_xi = (r * r / (r * r + s_meas * s_meas).sqrt()).ln();
        let sigma_xi = ((s_meas / r) * (s_meas / r)).ln_1p().sqrt();
        m_obs.push(normal(mu_xi, sigma_xi).exp());
    }

    let me = MeasurementErrorInput::new(m_obs, vec![s_meas; n], prior_mean, prior_sd)?;
    let model = ForecastModel::new(kind, me, premiums, priors)?;
    let draws = sample(&model, &cfg.sampler.clone().with_seed(derive(sim_seed, 1)))?;

    let mut max_rhat = 0.0f64;
    for name in draws.names() {
        if let Ok(r) = rhat(&draws, name) {
            max_rhat = max_rhat.max(r);
        }
    }
    let div_frac = divergence_fraction(&draws);
    let excluded = max_rhat > cfg.rhat_max || div_frac > cfg.divergence_max;
    let diag = SimDiagnostics { sim, max_rhat, divergence_fraction: div_frac, excluded };
    if excluded {
        return Ok(SimOutcome { diag, ranks: Vec::new() });
    }

    let (stride, _) = thin_stride_draws(cfg);
    let thin = draws.thin(stride)?;
    let mut tie_rng = stream_rng(sim_seed, 2);
    let mut ranks = Vec::new();
    let mut rank_of = |name: &str, truth: f64| -> Result<()> {
        let draws = thin.quantity_draws(name)?;
        ranks.push((name.to_string(), truth, rank_statistic(truth, &draws, &mut tie_rng)));
        Ok(())
    };
    rank_of("eps", eps)?;
    rank_of("eta0", eta0)?;
    rank_of("fc_gamma[1]", g1)?;
    rank_of("fc_gamma[2]", g2)?;
    if kind == ForecastKind::MeanReversion {
        rank_of("mu", mu)?;
        rank_of("phi", phi)?;
    }
    for i in 1..=n {
        rank_of(&format!("eta[{i}]"), eta[i - 1])?;
        rank_of(&format!("r_true[{i}]"), t[i - 1].exp())?;
    }

    Ok(SimOutcome { diag, ranks })
}

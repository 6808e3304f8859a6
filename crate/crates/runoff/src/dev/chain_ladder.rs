//! Bayesian chain-ladder body model.
//!
//! `y_ij ~ Lognormal(log(alpha_{j-1} y_{ij-1}), sigma_ij)` with
//! `sigma_ij^2 = exp(gamma1 + gamma2 j + ln y_{ij-1})`, fitted to observed
//! cells with `2 <= j <= tau` on the loss-ratio scale.

use rand::RngCore;

use crate::dev::{dev_sigma, sample_dev_prior, ChainLadderParams, DevConfig};
use crate::error::{Error, Result};
use crate::inference::params::{Constraint, ParameterSpace};
use crate::inference::LogDensityModel;
use crate::math::{lognormal_logpdf, LN_2PI};
use crate::triangle::Triangle;

#[derive(Debug, Clone)]
pub struct ChainLadderModel {
    space: ParameterSpace,
    /// Loss ratios, run-off layout.
    ratios: Vec<Vec<f64>>,
    n_dev_lags: usize,
    tau: usize,
    kappa: f64,
    /// Fit-time likelihood scale multiplier; 1.0 except in misspecification probes.
    sigma_scale: f64,
}

impl ChainLadderModel {
    pub fn new(triangle: &Triangle, cfg: &DevConfig) -> Result<Self> {
        cfg.validate(triangle.n_dev_lags())?;
        let ratios = triangle.loss_ratios().values;
        let in_window = ratios.iter().map(|row| row.len().min(cfg.tau).saturating_sub(1)).sum::<usize>();
        if in_window == 0 {
            return Err(Error::validation(format!(
                "triangle {}: no observed cells with 2 <= j <= tau = {}",
                triangle.id(),
                cfg.tau
            )));
        }
        let m = triangle.n_dev_lags();
        let space = ParameterSpace::builder()
            .vector("log_alpha", m - 1, Constraint::Unbounded)
            .scalar("gamma1", Constraint::Unbounded)
            .scalar("gamma2", Constraint::Unbounded)
            .build()?;
        Ok(Self { space, ratios, n_dev_lags: m, tau: cfg.tau, kappa: cfg.kappa, sigma_scale: 1.0 })
    }

    pub fn with_sigma_scale(mut self, scale: f64) -> Self {
        self.sigma_scale = scale;
        self
    }

    pub fn params_from(&self, position: &[f64]) -> ChainLadderParams {
        let m = self.n_dev_lags;
        ChainLadderParams {
            log_alpha: position[..m - 1].to_vec(),
            gamma1: position[m - 1],
            gamma2: position[m],
        }
    }

    /// All chain-ladder coordinates are unbounded, so a constrained draw row
    /// reads back directly.
    pub fn params_from_constrained(&self, row: &[f64]) -> ChainLadderParams {
        self.params_from(row)
    }

    /// Joint log likelihood of the in-window cells at `params` (no priors);
    /// the calibration suite ranks this as a data-space test quantity.
    pub fn log_likelihood(&self, params: &ChainLadderParams) -> f64 {
        let mut lp = 0.0;
        for row in &self.ratios {
            for j in 2..=row.len().min(self.tau) {
                let prev = row[j - 2];
                let mu = params.log_alpha[j - 2] + prev.ln();
                let sigma = dev_sigma(params.gamma1, params.gamma2, j, prev) * self.sigma_scale;
                lp += lognormal_logpdf(row[j - 1], mu, sigma);
            }
        }
        lp
    }
}

impl LogDensityModel for ChainLadderModel {
    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
        let m = self.n_dev_lags;
        let log_alpha = &position[..m - 1];
        let gamma1 = position[m - 1];
        let gamma2 = position[m];
        let mut lp = 0.0;
        let mut grad = vec![0.0; m + 1];

        let c2 = self.sigma_scale * self.sigma_scale;
        for row in &self.ratios {
            for j in 2..=row.len().min(self.tau) {
                let prev = row[j - 2];
                let cur = row[j - 1];
                let mu = log_alpha[j - 2] + prev.ln();
                let s2 = (gamma1 + gamma2 * j as f64 + prev.ln()).exp() * c2;
                let z = cur.ln() - mu;
                lp += -cur.ln() - 0.5 * s2.ln() - 0.5 * LN_2PI - z * z / (2.0 * s2);
                grad[j - 2] += z / s2;
                let dv = -0.5 + z * z / (2.0 * s2);
                grad[m - 1] += dv;
                grad[m] += dv * j as f64;
            }
        }

        // Priors: log alpha ~ N(0, k), gamma1 ~ N(-3, 0.25k), gamma2 ~ N(-1, 0.1k).
        let k = self.kappa;
        for (i, &la) in log_alpha.iter().enumerate() {
            lp += crate::math::normal_logpdf(la, 0.0, k);
            grad[i] += -la / (k * k);
        }
        let (s1, s2p) = (0.25 * k, 0.1 * k);
        lp += crate::math::normal_logpdf(gamma1, -3.0, s1);
        grad[m - 1] += -(gamma1 + 3.0) / (s1 * s1);
        lp += crate::math::normal_logpdf(gamma2, -1.0, s2p);
        grad[m] += -(gamma2 + 1.0) / (s2p * s2p);

        (lp, grad)
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let cfg = DevConfig {
            tau: self.tau,
            rho: (2, self.n_dev_lags.max(3)),
            j_max: 4 * self.n_dev_lags,
            kappa: self.kappa,
        };
        let (cl, _) = sample_dev_prior(&cfg, self.n_dev_lags, rng);
        let mut x = cl.log_alpha;
        x.push(cl.gamma1);
        x.push(cl.gamma2);
        x
    }
}

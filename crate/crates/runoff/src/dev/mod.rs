//! Loss-development generative models: chain-ladder body and generalized
//! Bondy tail.
//!
//! Both models are lag-1 multiplicative lognormal models on the loss-ratio
//! scale (cells divided by their accident year's premium), so the stated
//! priors are weakly informative at a common scale regardless of program
//! size; with unit premiums the formulas act on raw losses. The first column
//! is conditioned on, never modeled.

mod bondy;
mod chain_ladder;
mod simulate;

pub use bondy::{bondy_link_ratio, BondyModel};
pub use chain_ladder::ChainLadderModel;
pub use simulate::{simulate_development, UltimateSummary};

use rand::Rng;
use rand::RngCore;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Cutoffs and scales shared by the development stage.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DevConfig {
    /// Body cutoff: chain-ladder is trained on lags `2..=tau` and drives the
    /// forward simulation up to `tau`.
    pub tau: usize,
    /// Tail training window `[rho.0, rho.1]`.
    pub rho: (usize, usize),
    /// Simulation horizon treated as lag infinity.
    pub j_max: usize,
    /// Prior scale multiplier applied to every prior standard deviation.
    pub kappa: f64,
}

impl DevConfig {
    /// Defaults for a triangle with `m` development lags: `tau = m/2`,
    /// `rho = (tau + 1, m)`, horizon `4m`, unit prior scale.
    pub fn defaults(m: usize) -> Self {
        let tau = (m / 2).max(2);
        Self { tau, rho: (tau + 1, m), j_max: 4 * m, kappa: 1.0 }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.tau < 2 || self.tau > m {
            return Err(Error::validation(format!("tau = {} must be in 2..={m}", self.tau)));
        }
        let (r1, r2) = self.rho;
        if r1 < 2 || r1 >= r2 || r2 > m {
            return Err(Error::validation(format!(
                "rho = ({r1},{r2}) must satisfy 2 <= rho1 < rho2 <= {m}"
            )));
        }
        if self.j_max < m {
            return Err(Error::validation(format!("j_max = {} must be >= {m}", self.j_max)));
        }
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(Error::validation("kappa must be positive"));
        }
        Ok(())
    }
}

/// Chain-ladder parameters on their sampling scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLadderParams {
    /// Log development factors, length `M - 1`.
    pub log_alpha: Vec<f64>,
    /// Variance intercept (log scale).
    pub gamma1: f64,
    /// Variance slope per lag.
    pub gamma2: f64,
}

impl ChainLadderParams {
    /// Development factor from lag `j` to `j + 1`.
    pub fn alpha(&self, j: usize) -> f64 {
        self.log_alpha[j - 1].exp()
    }
}

/// Generalized Bondy parameters on their sampling scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondyParams {
    /// `log omega >= 0`, so the asymptote `omega >= 1`.
    pub log_omega: f64,
    /// `logit beta`, so the decay rate `beta` lies in (0, 1).
    pub logit_beta: f64,
    /// Variance intercept (log scale).
    pub lambda1: f64,
    /// Variance slope per lag.
    pub lambda2: f64,
}

impl BondyParams {
    pub fn omega(&self) -> f64 {
        self.log_omega.exp()
    }

    pub fn beta(&self) -> f64 {
        crate::inference::params::logistic(self.logit_beta)
    }
}

/// Independent draws from the development priors, with the prior scale
/// multiplier applied: `log alpha ~ N(0, k)`, `gamma1 ~ N(-3, 0.25k)`,
/// `gamma2 ~ N(-1, 0.1k)`, `log omega ~ N+(0, k)`, `logit beta ~ N(-2, 0.5k)`,
/// `lambda1 ~ N(-3, 0.25k)`, `lambda2 ~ N(-1, 0.1k)`.
pub fn sample_dev_prior(
    cfg: &DevConfig,
    n_dev_lags: usize,
    rng: &mut dyn RngCore,
) -> (ChainLadderParams, BondyParams) {
    let k = cfg.kappa;
    let mut normal = |mean: f64, sd: f64| mean + sd * rng.sample::<f64, _>(StandardNormal);
    let log_alpha = (0..n_dev_lags - 1).map(|_| normal(0.0, k)).collect();
    let gamma1 = normal(-3.0, 0.25 * k);
    let gamma2 = normal(-1.0, 0.1 * k);
    let cl = ChainLadderParams { log_alpha, gamma1, gamma2 };
    let bondy = BondyParams {
        log_omega: normal(0.0, k).abs(),
        logit_beta: normal(-2.0, 0.5 * k),
        lambda1: normal(-3.0, 0.25 * k),
        lambda2: normal(-1.0, 0.1 * k),
    };
    (cl, bondy)
}

/// Lognormal scale parameter implied by the shared development variance
/// model: `sigma^2 = exp(intercept + slope * j + ln(prev))`.
pub(crate) fn dev_sigma(intercept: f64, slope: f64, j: usize, prev: f64) -> f64 {
    (intercept + slope * j as f64 + prev.ln()).exp().sqrt()
}

/// Prior draws packed as draw matrices (body, tail), for prior predictive
/// checks and simulation seeds.
pub fn prior_draw_matrix(
    cfg: &DevConfig,
    n_dev_lags: usize,
    n_draws: usize,
    seed: u64,
) -> (crate::inference::DrawMatrix, crate::inference::DrawMatrix) {
    use crate::inference::{DrawMatrix, SamplerMeta};
    let mut rng = crate::seed::stream_rng(seed, 0);
    let mut body_names: Vec<String> =
        (1..n_dev_lags).map(|k| format!("log_alpha[{k}]")).collect();
    body_names.push("gamma1".into());
    body_names.push("gamma2".into());
    let tail_names: Vec<String> =
        ["omega", "beta", "lambda1", "lambda2"].iter().map(|s| s.to_string()).collect();
    let mut body_values = Vec::with_capacity(n_draws * (n_dev_lags + 1));
    let mut tail_values = Vec::with_capacity(n_draws * 4);
    for _ in 0..n_draws {
        let (cl, bondy) = sample_dev_prior(cfg, n_dev_lags, &mut rng);
        body_values.extend(cl.log_alpha);
        body_values.push(cl.gamma1);
        body_values.push(cl.gamma2);
        tail_values.push(bondy.omega());
        tail_values.push(bondy.beta());
        tail_values.push(bondy.lambda1);
        tail_values.push(bondy.lambda2);
    }
    let meta = |_: ()| SamplerMeta {
        seed,
        divergences: vec![0],
        step_sizes: vec![f64::NAN],
        accept_rates: vec![f64::NAN],
    };
    let body = DrawMatrix::from_parts(body_names, 1, n_draws, body_values, meta(())).unwrap();
    let tail = DrawMatrix::from_parts(tail_names, 1, n_draws, tail_values, meta(())).unwrap();
    (body, tail)
}

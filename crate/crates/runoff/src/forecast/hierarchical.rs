//! Hierarchical pooling of the state-space forecasters across programs.
//!
//! Program-level innovation scales and initial levels follow group-level
//! distributions: `log eps_g ~ N(eps_mu, eps_sigma)` and
//! `eta_g0 ~ N(eta_mu0, eta_sigma0)`, with hyperpriors
//! `eps_mu ~ N(-2, 0.5)`, `log eps_sigma ~ N(-2, 0.5)`,
//! `eta_mu0 ~ N(-1, 0.5)`, `log eta_sigma0 ~ N(-2, 0.5)`. Observation-noise
//! coefficients and mean-reversion parameters keep their per-program priors.
//!
//! The sampler works on non-centered coordinates: standard-normal
//! innovations `u_gi` for the latent states and standard-normal raws for
//! `log eps_g` and `eta_g0`. The centered quantities (`eta_g*`, `eps_g`,
//! `eta0_g`) are reported as derived columns of the draw matrix, so
//! downstream prediction reads the same names either way.

use rand::Rng;
use rand::RngCore;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::forecast::state_space::{
    ForecastKind, ForecastPriors, GaussianPrior, MeasurementErrorInput,
};
use crate::inference::params::{log1p_exp, logistic, Constraint, ParameterSpace};
use crate::inference::LogDensityModel;
use crate::math::{normal_logpdf, LN_2PI};

/// Group-level settings for a hierarchical fit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HierarchicalConfig {
    pub kind: ForecastKind,
    /// Prior scale multiplier applied to every fixed prior and hyperprior SD.
    pub kappa: f64,
    /// Informed lognormal prior on the latent true ratios (off = improper uniform).
    pub informed_prior: bool,
}

impl HierarchicalConfig {
    pub fn new(kind: ForecastKind) -> Self {
        Self { kind, kappa: 1.0, informed_prior: true }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }
}

/// One program's inputs to the hierarchical fit.
#[derive(Debug, Clone)]
pub struct ProgramInput {
    pub id: String,
    pub me: MeasurementErrorInput,
    pub premiums: Vec<f64>,
}

struct ProgramLayout {
    n: usize,
    idx_u: usize,
    idx_w: usize,
    idx_z: usize,
    idx_g1: usize,
    idx_mr: Option<usize>,
    t_index: Vec<Option<usize>>,
}

/// Joint model over `G` programs with shared hyperparameters. Program blocks
/// are conditionally independent given the four hypers.
pub struct HierarchicalModel {
    space: ParameterSpace,
    cfg: HierarchicalConfig,
    programs: Vec<ProgramInput>,
    layouts: Vec<ProgramLayout>,
    inv_sqrt_p: Vec<Vec<f64>>,
    ln_m: Vec<Vec<f64>>,
    sigma_xi: Vec<Vec<f64>>,
    prior_t: Vec<(f64, f64)>,
    priors: ForecastPriors,
    hyper: HyperPriors,
    derived_names: Vec<String>,
}

struct HyperPriors {
    eps_mu: GaussianPrior,
    log_eps_sigma: GaussianPrior,
    eta_mu0: GaussianPrior,
    log_eta_sigma0: GaussianPrior,
}

const IDX_EPS_MU: usize = 0;
const IDX_EPS_SIGMA: usize = 1;
const IDX_ETA_MU0: usize = 2;
const IDX_ETA_SIGMA0: usize = 3;

impl HierarchicalModel {
    pub fn new(programs: Vec<ProgramInput>, cfg: HierarchicalConfig) -> Result<Self> {
        if programs.is_empty() {
            return Err(Error::validation("hierarchical fit needs at least one program"));
        }
        let k = cfg.kappa;
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::validation("kappa must be positive"));
        }
        let mut builder = ParameterSpace::builder()
            .scalar("eps_mu", Constraint::Unbounded)
            .scalar("eps_sigma", Constraint::Positive)
            .scalar("eta_mu0", Constraint::Unbounded)
            .scalar("eta_sigma0", Constraint::Positive);
        let mut layouts = Vec::with_capacity(programs.len());
        let mut derived_names = Vec::new();
        let mut next = 4usize;
        for (g, prog) in programs.iter().enumerate() {
            let n = prog.me.n_years();
            if prog.premiums.len() != n {
                return Err(Error::validation(format!(
                    "program {}: {} premiums for {n} measurement inputs",
                    prog.id,
                    prog.premiums.len()
                )));
            }
            if prog.premiums.iter().any(|&p| !p.is_finite() || p <= 0.0) {
                return Err(Error::validation(format!("program {}: premiums must be positive", prog.id)));
            }
            let tag = g + 1;
            builder = builder
                .vector(&format!("u_g{tag}"), n, Constraint::Unbounded)
                .scalar(&format!("eta0_raw_g{tag}"), Constraint::Unbounded)
                .scalar(&format!("eps_raw_g{tag}"), Constraint::Unbounded)
                .vector(&format!("fc_gamma_g{tag}"), 2, Constraint::Unbounded);
            let idx_u = next;
            let idx_w = next + n;
            let idx_z = next + n + 1;
            let idx_g1 = next + n + 2;
            next += n + 4;
            let idx_mr = if cfg.kind == ForecastKind::MeanReversion {
                builder = builder
                    .scalar(&format!("mu_g{tag}"), Constraint::Unbounded)
                    .scalar(&format!("phi_g{tag}"), Constraint::UnitInterval);
                let at = next;
                next += 2;
                Some(at)
            } else {
                None
            };
            let mut t_index = Vec::with_capacity(n);
            for i in 0..n {
                if prog.me.is_exact(i) {
                    t_index.push(None);
                } else {
                    builder = builder.scalar(&format!("r_true_g{tag}[{}]", i + 1), Constraint::Positive);
                    t_index.push(Some(next));
                    next += 1;
                }
            }
            derived_names.extend((1..=n).map(|i| format!("eta_g{tag}[{i}]")));
            derived_names.push(format!("eta0_g{tag}"));
            derived_names.push(format!("eps_g{tag}"));
            layouts.push(ProgramLayout { n, idx_u, idx_w, idx_z, idx_g1, idx_mr, t_index });
        }
        let space = builder.build()?;

        let inv_sqrt_p = programs
            .iter()
            .map(|p| p.premiums.iter().map(|v| 1.0 / v.sqrt()).collect())
            .collect();
        let ln_m = programs
            .iter()
            .map(|p| p.me.means().iter().map(|m| m.ln()).collect())
            .collect();
        let sigma_xi = programs
            .iter()
            .map(|p| {
                p.me.means()
                    .iter()
                    .zip(p.me.sds())
                    .map(|(&m, &s)| ((s / m) * (s / m)).ln_1p().sqrt())
                    .collect()
            })
            .collect();
        let prior_t = programs
            .iter()
            .map(|p| crate::forecast::moment::lognormal_moment_match(p.me.prior_mean, p.me.prior_sd))
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            space,
            cfg,
            programs,
            layouts,
            inv_sqrt_p,
            ln_m,
            sigma_xi,
            prior_t,
            priors: ForecastPriors::defaults(k),
            hyper: HyperPriors {
                eps_mu: GaussianPrior::new(-2.0, 0.5 * k),
                log_eps_sigma: GaussianPrior::new(-2.0, 0.5 * k),
                eta_mu0: GaussianPrior::new(-1.0, 0.5 * k),
                log_eta_sigma0: GaussianPrior::new(-2.0, 0.5 * k),
            },
            derived_names,
        })
    }

    pub fn n_programs(&self) -> usize {
        self.programs.len()
    }

    pub fn program_ids(&self) -> Vec<&str> {
        self.programs.iter().map(|p| p.id.as_str()).collect()
    }

    /// Names of the four group-level hyperparameters.
    pub fn hyper_names() -> [&'static str; 4] {
        ["eps_mu", "eps_sigma", "eta_mu0", "eta_sigma0"]
    }

    /// Per-program scalars recovered from one unconstrained position.
    fn program_state(&self, position: &[f64], g: usize) -> ProgramState {
        let layout = &self.layouts[g];
        let eps_mu = position[IDX_EPS_MU];
        let eps_sigma = position[IDX_EPS_SIGMA].exp();
        let eta_mu0 = position[IDX_ETA_MU0];
        let eta_sigma0 = position[IDX_ETA_SIGMA0].exp();
        let le = eps_mu + eps_sigma * position[layout.idx_z];
        let eta0 = eta_mu0 + eta_sigma0 * position[layout.idx_w];
        let (mu, phi) = match (self.cfg.kind, layout.idx_mr) {
            (ForecastKind::MeanReversion, Some(k)) => (position[k], logistic(position[k + 1])),
            _ => (0.0, 1.0),
        };
        let u = &position[layout.idx_u..layout.idx_u + layout.n];
        let eps = le.exp();
        let mut eta = Vec::with_capacity(layout.n);
        let mut prev = eta0;
        for &ui in u {
            let mean = mu * (1.0 - phi) + phi * prev;
            let v = mean + eps * ui;
            eta.push(v);
            prev = v;
        }
        ProgramState { le, eps, eta0, mu, phi, eta }
    }
}

struct ProgramState {
    le: f64,
    eps: f64,
    eta0: f64,
    mu: f64,
    phi: f64,
    eta: Vec<f64>,
}

impl LogDensityModel for HierarchicalModel {
    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
        let eps_mu = position[IDX_EPS_MU];
        let log_eps_sigma = position[IDX_EPS_SIGMA];
        let eps_sigma = log_eps_sigma.exp();
        let eta_mu0 = position[IDX_ETA_MU0];
        let log_eta_sigma0 = position[IDX_ETA_SIGMA0];
        let eta_sigma0 = log_eta_sigma0.exp();

        let mut lp = 0.0;
        let mut grad = vec![0.0; self.space.dim()];

        lp += self.hyper.eps_mu.logpdf(eps_mu);
        grad[IDX_EPS_MU] += self.hyper.eps_mu.dlogpdf(eps_mu);
        lp += self.hyper.log_eps_sigma.logpdf(log_eps_sigma);
        grad[IDX_EPS_SIGMA] += self.hyper.log_eps_sigma.dlogpdf(log_eps_sigma);
        lp += self.hyper.eta_mu0.logpdf(eta_mu0);
        grad[IDX_ETA_MU0] += self.hyper.eta_mu0.dlogpdf(eta_mu0);
        lp += self.hyper.log_eta_sigma0.logpdf(log_eta_sigma0);
        grad[IDX_ETA_SIGMA0] += self.hyper.log_eta_sigma0.dlogpdf(log_eta_sigma0);

        for (g, layout) in self.layouts.iter().enumerate() {
            let n = layout.n;
            let u = &position[layout.idx_u..layout.idx_u + n];
            let w = position[layout.idx_w];
            let z = position[layout.idx_z];
            let g1 = position[layout.idx_g1];
            let g2 = position[layout.idx_g1 + 1];
            let state = self.program_state(position, g);
            let (eps, phi, mu) = (state.eps, state.phi, state.mu);

            // Standard-normal blocks.
            lp += -0.5 * (z * z + w * w) - LN_2PI;
            grad[layout.idx_z] += -z;
            grad[layout.idx_w] += -w;
            for (k, &ui) in u.iter().enumerate() {
                lp += -0.5 * ui * ui - 0.5 * LN_2PI;
                grad[layout.idx_u + k] += -ui;
            }

            // Unpooled per-program priors.
            lp += self.priors.fc_gamma.logpdf(g1) + self.priors.fc_gamma.logpdf(g2);
            grad[layout.idx_g1] += self.priors.fc_gamma.dlogpdf(g1);
            grad[layout.idx_g1 + 1] += self.priors.fc_gamma.dlogpdf(g2);
            if let Some(k) = layout.idx_mr {
                let f = position[k + 1];
                lp += self.priors.mu.logpdf(mu) + self.priors.logit_phi.logpdf(f);
                grad[k] += self.priors.mu.dlogpdf(mu);
                grad[k + 1] += self.priors.logit_phi.dlogpdf(f);
            }

            // Observation, measurement and latent-ratio prior; a[i] collects
            // the density gradient with respect to eta_i for the chain rule
            // back through the state recursion.
            let e2g1 = (2.0 * g1).exp();
            let e2g2 = (2.0 * g2).exp();
            let mut a = vec![0.0; n];
            #[allow(clippy::needless_range_loop)]
            for i in 0..n {
                let s2 = e2g1 + e2g2 * self.inv_sqrt_p[g][i];
                let t = match layout.t_index[i] {
                    Some(k) => position[k],
                    None => self.ln_m[g][i],
                };
                let zo = t - state.eta[i];
                lp += -0.5 * s2.ln() - 0.5 * LN_2PI - zo * zo / (2.0 * s2);
                a[i] = zo / s2;
                let ds2 = -0.5 / s2 + zo * zo / (2.0 * s2 * s2);
                grad[layout.idx_g1] += ds2 * 2.0 * e2g1;
                grad[layout.idx_g1 + 1] += ds2 * 2.0 * e2g2 * self.inv_sqrt_p[g][i];

                let Some(k) = layout.t_index[i] else { continue };
                grad[k] += -zo / s2;

                let sx = self.sigma_xi[g][i];
                let s_meas = self.programs[g].me.sds()[i];
                let gap = 2.0 * t - 2.0 * s_meas.ln();
                let mu_xi = 2.0 * t - 0.5 * (2.0 * s_meas.ln() + log1p_exp(gap));
                let dmu_dt = 2.0 - logistic(gap);
                let zm = (self.ln_m[g][i] - mu_xi) / sx;
                lp += -self.ln_m[g][i] - sx.ln() - 0.5 * LN_2PI - 0.5 * zm * zm;
                grad[k] += zm / sx * dmu_dt;

                if self.cfg.informed_prior {
                    let (pm, ps) = self.prior_t[g];
                    lp += normal_logpdf(t, pm, ps);
                    grad[k] += -(t - pm) / (ps * ps);
                } else {
                    lp += t;
                    grad[k] += 1.0;
                }
            }

            // Chain rule through eta_i = mu(1-phi) + phi eta_{i-1} + eps u_i.
            // b[i] = a[i] + phi b[i+1] gives sum_{j>=i} a_j phi^(j-i).
            let mut b = vec![0.0; n];
            let mut acc = 0.0;
            for i in (0..n).rev() {
                acc = a[i] + phi * acc;
                b[i] = acc;
            }
            for i in 0..n {
                grad[layout.idx_u + i] += eps * b[i];
            }
            // d eta_i / d eta0 = phi^(i+1).
            let deta0: f64 = phi * b[0];
            grad[layout.idx_w] += deta0 * eta_sigma0;
            grad[IDX_ETA_MU0] += deta0;
            grad[IDX_ETA_SIGMA0] += deta0 * eta_sigma0 * w;
            // d eta_i / d eps accumulates through E_i = phi E_{i-1} + u_i.
            let mut se = 0.0;
            let mut e_run = 0.0;
            for i in 0..n {
                e_run = phi * e_run + u[i];
                se += a[i] * e_run;
            }
            grad[layout.idx_z] += se * eps * eps_sigma;
            grad[IDX_EPS_MU] += se * eps;
            grad[IDX_EPS_SIGMA] += se * eps * eps_sigma * z;
            if let Some(k) = layout.idx_mr {
                let mut dmu_sum = 0.0;
                let mut phi_pow = 1.0;
                for ai in a.iter() {
                    phi_pow *= phi;
                    dmu_sum += ai * (1.0 - phi_pow);
                }
                grad[k] += dmu_sum;
                let mut dphi_sum = 0.0;
                let mut d_run = 0.0;
                let mut prev = state.eta0;
                for (ai, etai) in a.iter().zip(&state.eta) {
                    d_run = (prev - mu) + phi * d_run;
                    dphi_sum += ai * d_run;
                    prev = *etai;
                }
                grad[k + 1] += dphi_sum * phi * (1.0 - phi);
            }
        }

        (lp, grad)
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut x = vec![0.0; self.space.dim()];
        x[IDX_EPS_MU] = self.hyper.eps_mu.draw(rng);
        x[IDX_EPS_SIGMA] = self.hyper.log_eps_sigma.draw(rng);
        x[IDX_ETA_MU0] = self.hyper.eta_mu0.draw(rng);
        x[IDX_ETA_SIGMA0] = self.hyper.log_eta_sigma0.draw(rng);
        for (g, layout) in self.layouts.iter().enumerate() {
            for k in 0..layout.n {
                x[layout.idx_u + k] = rng.sample::<f64, _>(StandardNormal);
            }
            x[layout.idx_w] = rng.sample::<f64, _>(StandardNormal);
            x[layout.idx_z] = rng.sample::<f64, _>(StandardNormal);
            x[layout.idx_g1] = self.priors.fc_gamma.draw(rng);
            x[layout.idx_g1 + 1] = self.priors.fc_gamma.draw(rng);
            if let Some(k) = layout.idx_mr {
                x[k] = self.priors.mu.draw(rng);
                x[k + 1] = self.priors.logit_phi.draw(rng);
            }
            #[allow(clippy::needless_range_loop)]
            for i in 0..layout.n {
                if let Some(k) = layout.t_index[i] {
                    let (pm, ps) = self.prior_t[g];
                    x[k] = if self.cfg.informed_prior {
                        pm + ps * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        self.ln_m[g][i] + 0.5 * rng.sample::<f64, _>(StandardNormal)
                    };
                }
            }
        }
        x
    }

    fn derived_names(&self) -> Vec<String> {
        self.derived_names.clone()
    }

    fn derived(&self, position: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.derived_names.len());
        for g in 0..self.programs.len() {
            let state = self.program_state(position, g);
            out.extend(state.eta);
            out.push(state.eta0);
            out.push(state.eps);
            debug_assert!(state.le.is_finite());
        }
        out
    }
}

//! State-space models for ultimate loss ratios.
//!
//! A latent log loss ratio `eta_i` evolves across accident years either as a
//! random walk or with mean reversion, and the "observed" ultimate ratio is
//! lognormal around it with premium-dependent noise
//! `sigma_i^2 = exp(gamma1)^2 + exp(gamma2)^2 / sqrt(p_i)`. Development-model
//! outputs enter through an errors-in-variables measurement layer: the
//! posterior mean `m_i` is lognormal around the latent true ratio `r'_i` with
//! `mu_xi = log(r'^2 / sqrt(r'^2 + s_i^2))` and
//! `sigma_xi = sqrt(log(1 + s_i^2 / m_i^2))`.
//!
//! Inputs whose reported standard deviation is (numerically) zero are exact
//! observations: their `r'_i` is fixed at `m_i` instead of being sampled, the
//! analytic limit of the measurement density as `s_i -> 0`.

use rand::Rng;
use rand::RngCore;
use rand_distr::StandardNormal;

use crate::dev::UltimateSummary;
use crate::error::{Error, Result};
use crate::forecast::moment::lognormal_moment_match;
use crate::inference::params::{logistic, Constraint, ParameterSpace};
use crate::inference::LogDensityModel;
use crate::math::{normal_logpdf, LN_2PI};

/// Which latent transition the forecaster uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ForecastKind {
    RandomWalk,
    MeanReversion,
}

impl ForecastKind {
    pub fn label(&self) -> &'static str {
        match self {
            ForecastKind::RandomWalk => "rw",
            ForecastKind::MeanReversion => "mr",
        }
    }
}

/// Location/scale of one normal prior.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianPrior {
    pub location: f64,
    pub scale: f64,
}

impl GaussianPrior {
    pub fn new(location: f64, scale: f64) -> Self {
        Self { location, scale }
    }

    pub(crate) fn logpdf(&self, x: f64) -> f64 {
        normal_logpdf(x, self.location, self.scale)
    }

    pub(crate) fn dlogpdf(&self, x: f64) -> f64 {
        -(x - self.location) / (self.scale * self.scale)
    }

    pub(crate) fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        self.location + self.scale * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Priors for the single-program forecasters. `defaults(kappa)` scales every
/// standard deviation by the sensitivity multiplier; `derive_priors` replaces
/// the `log_eps` and `eta0` entries with group-level posterior summaries.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ForecastPriors {
    pub log_eps: GaussianPrior,
    pub eta0: GaussianPrior,
    pub fc_gamma: GaussianPrior,
    pub mu: GaussianPrior,
    pub logit_phi: GaussianPrior,
}

impl ForecastPriors {
    pub fn defaults(kappa: f64) -> Self {
        Self {
            log_eps: GaussianPrior::new(-0.5, kappa),
            eta0: GaussianPrior::new(0.0, kappa),
            fc_gamma: GaussianPrior::new(-2.0, kappa),
            mu: GaussianPrior::new(-1.0, kappa),
            logit_phi: GaussianPrior::new(0.0, kappa),
        }
    }
}

const EXACT_REL_SD: f64 = 1e-7;
const FLOOR_REL_SD: f64 = 1e-8;

/// Development-stage outputs feeding the forecaster, with the empirical
/// loss-ratio moments that parameterize the prior on the latent true ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementErrorInput {
    means: Vec<f64>,
    sds: Vec<f64>,
    /// Empirical mean of observed ultimate loss ratios, `E[r]`.
    pub prior_mean: f64,
    /// Empirical standard deviation of observed ultimate loss ratios, `SD[r]`.
    pub prior_sd: f64,
}

impl MeasurementErrorInput {
    pub fn new(means: Vec<f64>, sds: Vec<f64>, prior_mean: f64, prior_sd: f64) -> Result<Self> {
        if means.is_empty() || means.len() != sds.len() {
            return Err(Error::validation("measurement input needs matching nonempty mean/sd vectors"));
        }
        for (i, (&m, &s)) in means.iter().zip(&sds).enumerate() {
            if !m.is_finite() || m <= 0.0 {
                return Err(Error::validation(format!("measurement mean {m} at year {} must be positive", i + 1)));
            }
            if !s.is_finite() || s < 0.0 {
                return Err(Error::validation(format!("measurement sd {s} at year {} must be nonnegative", i + 1)));
            }
        }
        if prior_mean <= 0.0 || prior_sd <= 0.0 || !prior_mean.is_finite() || !prior_sd.is_finite() {
            return Err(Error::validation("empirical prior needs E[r] > 0 and SD[r] > 0"));
        }
        let sds = means.iter().zip(&sds).map(|(&m, &s)| s.max(FLOOR_REL_SD * m)).collect();
        Ok(Self { means, sds, prior_mean, prior_sd })
    }

    pub fn from_summary(summary: &UltimateSummary, prior_mean: f64, prior_sd: f64) -> Result<Self> {
        Self::new(summary.means.clone(), summary.sds.clone(), prior_mean, prior_sd)
    }

    pub fn n_years(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    /// Whether year `i` (0-based) carries an exactly observed ratio.
    pub fn is_exact(&self, i: usize) -> bool {
        self.sds[i] <= EXACT_REL_SD * self.means[i]
    }
}

/// Observation noise `sigma_i` for premium `p`.
pub(crate) fn obs_sigma_sq(gamma1: f64, gamma2: f64, premium: f64) -> f64 {
    (2.0 * gamma1).exp() + (2.0 * gamma2).exp() / premium.sqrt()
}

/// Single-program state-space forecaster with measurement error.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    space: ParameterSpace,
    kind: ForecastKind,
    me: MeasurementErrorInput,
    premiums: Vec<f64>,
    inv_sqrt_p: Vec<f64>,
    ln_m: Vec<f64>,
    sigma_xi: Vec<f64>,
    /// Flat index of `log r'_i`, or `None` for exact observations.
    t_index: Vec<Option<usize>>,
    /// Moment-matched prior on `log r'`.
    prior_t: (f64, f64),
    /// When false, `r'` gets the improper uniform prior instead.
    informed: bool,
    priors: ForecastPriors,
    n: usize,
    idx_eta0: usize,
    idx_le: usize,
    idx_g1: usize,
    idx_mr: Option<usize>,
}

impl ForecastModel {
    pub fn new(
        kind: ForecastKind,
        me: MeasurementErrorInput,
        premiums: Vec<f64>,
        priors: ForecastPriors,
    ) -> Result<Self> {
        Self::with_prior_choice(kind, me, premiums, priors, true)
    }

    pub fn with_prior_choice(
        kind: ForecastKind,
        me: MeasurementErrorInput,
        premiums: Vec<f64>,
        priors: ForecastPriors,
        informed: bool,
    ) -> Result<Self> {
        let n = me.n_years();
        if premiums.len() != n {
            return Err(Error::validation(format!(
                "{} premiums for {n} measurement inputs",
                premiums.len()
            )));
        }
        if premiums.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(Error::validation("premiums must be positive"));
        }
        let prior_t = lognormal_moment_match(me.prior_mean, me.prior_sd)?;

        let mut builder = ParameterSpace::builder()
            .vector("eta", n, Constraint::Unbounded)
            .scalar("eta0", Constraint::Unbounded)
            .scalar("eps", Constraint::Positive)
            .vector("fc_gamma", 2, Constraint::Unbounded);
        if kind == ForecastKind::MeanReversion {
            builder = builder.scalar("mu", Constraint::Unbounded).scalar("phi", Constraint::UnitInterval);
        }
        let mut t_index = Vec::with_capacity(n);
        let mut next = n + 4 + if kind == ForecastKind::MeanReversion { 2 } else { 0 };
        for i in 0..n {
            if me.is_exact(i) {
                t_index.push(None);
            } else {
                builder = builder.scalar(&format!("r_true[{}]", i + 1), Constraint::Positive);
                t_index.push(Some(next));
                next += 1;
            }
        }
        let space = builder.build()?;

        let inv_sqrt_p = premiums.iter().map(|p| 1.0 / p.sqrt()).collect();
        let ln_m = me.means().iter().map(|m| m.ln()).collect();
        let sigma_xi = me
            .means()
            .iter()
            .zip(me.sds())
            .map(|(&m, &s)| ((s / m) * (s / m)).ln_1p().sqrt())
            .collect();
        let idx_mr = (kind == ForecastKind::MeanReversion).then_some(n + 4);
        Ok(Self {
            space,
            kind,
            me,
            premiums,
            inv_sqrt_p,
            ln_m,
            sigma_xi,
            t_index,
            prior_t,
            informed,
            priors,
            n,
            idx_eta0: n,
            idx_le: n + 1,
            idx_g1: n + 2,
            idx_mr,
        })
    }

    pub fn kind(&self) -> ForecastKind {
        self.kind
    }

    pub fn n_years(&self) -> usize {
        self.n
    }

    pub fn measurement(&self) -> &MeasurementErrorInput {
        &self.me
    }

    pub fn premiums(&self) -> &[f64] {
        &self.premiums
    }

    fn transition_mean(&self, prev: f64, mu: f64, phi: f64) -> f64 {
        match self.kind {
            ForecastKind::RandomWalk => prev,
            ForecastKind::MeanReversion => mu * (1.0 - phi) + phi * prev,
        }
    }
}

impl LogDensityModel for ForecastModel {
    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n;
        let eta = &position[..n];
        let eta0 = position[self.idx_eta0];
        let le = position[self.idx_le];
        let eps = le.exp();
        let eps2 = eps * eps;
        let g1 = position[self.idx_g1];
        let g2 = position[self.idx_g1 + 1];
        let (mu, f, phi) = match self.idx_mr {
            Some(k) => (position[k], position[k + 1], logistic(position[k + 1])),
            None => (0.0, 0.0, 1.0),
        };

        let mut lp = 0.0;
        let mut grad = vec![0.0; self.space.dim()];

        // Latent transitions.
        for i in 0..n {
            let prev = if i == 0 { eta0 } else { eta[i - 1] };
            let mean = self.transition_mean(prev, mu, phi);
            let d = eta[i] - mean;
            lp += -le - 0.5 * LN_2PI - d * d / (2.0 * eps2);
            grad[i] += -d / eps2;
            let dprev = match self.kind {
                ForecastKind::RandomWalk => 1.0,
                ForecastKind::MeanReversion => phi,
            };
            let prev_idx = if i == 0 { self.idx_eta0 } else { i - 1 };
            grad[prev_idx] += d / eps2 * dprev;
            grad[self.idx_le] += -1.0 + d * d / eps2;
            if let Some(k) = self.idx_mr {
                grad[k] += d / eps2 * (1.0 - phi);
                grad[k + 1] += d / eps2 * (prev - mu) * phi * (1.0 - phi);
            }
        }

        // Observation, measurement and latent-ratio prior per year.
        let e2g1 = (2.0 * g1).exp();
        let e2g2 = (2.0 * g2).exp();
        for i in 0..n {
            let s2 = e2g1 + e2g2 * self.inv_sqrt_p[i];
            let t = match self.t_index[i] {
                Some(k) => position[k],
                None => self.ln_m[i],
            };
            // Lognormal(r' | eta, sigma) in t = log r' coordinates is exactly
            // Normal(t | eta, sigma) once the Jacobian is folded in.
            let zo = t - eta[i];
            lp += -0.5 * s2.ln() - 0.5 * LN_2PI - zo * zo / (2.0 * s2);
            grad[i] += zo / s2;
            let ds2 = -0.5 / s2 + zo * zo / (2.0 * s2 * s2);
            grad[self.idx_g1] += ds2 * 2.0 * e2g1;
            grad[self.idx_g1 + 1] += ds2 * 2.0 * e2g2 * self.inv_sqrt_p[i];

            let Some(k) = self.t_index[i] else { continue };
            grad[k] += -zo / s2;

            // Measurement: m_i ~ Lognormal(mu_xi(t), sigma_xi).
            let sx = self.sigma_xi[i];
            let s_meas = self.me.sds()[i];
            let gap = 2.0 * t - 2.0 * s_meas.ln();
            let mu_xi = 2.0 * t - 0.5 * (2.0 * s_meas.ln() + crate::inference::params::log1p_exp(gap));
            let dmu_dt = 2.0 - logistic(gap);
            let zm = (self.ln_m[i] - mu_xi) / sx;
            lp += -self.ln_m[i] - sx.ln() - 0.5 * LN_2PI - 0.5 * zm * zm;
            grad[k] += zm / sx * dmu_dt;

            // Prior on log r'.
            if self.informed {
                let (pm, ps) = self.prior_t;
                lp += normal_logpdf(t, pm, ps);
                grad[k] += -(t - pm) / (ps * ps);
            } else {
                lp += t;
                grad[k] += 1.0;
            }
        }

        // Parameter priors.
        lp += self.priors.log_eps.logpdf(le);
        grad[self.idx_le] += self.priors.log_eps.dlogpdf(le);
        lp += self.priors.eta0.logpdf(eta0);
        grad[self.idx_eta0] += self.priors.eta0.dlogpdf(eta0);
        lp += self.priors.fc_gamma.logpdf(g1) + self.priors.fc_gamma.logpdf(g2);
        grad[self.idx_g1] += self.priors.fc_gamma.dlogpdf(g1);
        grad[self.idx_g1 + 1] += self.priors.fc_gamma.dlogpdf(g2);
        if let Some(k) = self.idx_mr {
            lp += self.priors.mu.logpdf(mu) + self.priors.logit_phi.logpdf(f);
            grad[k] += self.priors.mu.dlogpdf(mu);
            grad[k + 1] += self.priors.logit_phi.dlogpdf(f);
        }

        (lp, grad)
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut x = vec![0.0; self.space.dim()];
        let eta0 = self.priors.eta0.draw(rng);
        let le = self.priors.log_eps.draw(rng);
        let eps = le.exp();
        x[self.idx_eta0] = eta0;
        x[self.idx_le] = le;
        x[self.idx_g1] = self.priors.fc_gamma.draw(rng);
        x[self.idx_g1 + 1] = self.priors.fc_gamma.draw(rng);
        let (mu, phi) = match self.idx_mr {
            Some(k) => {
                x[k] = self.priors.mu.draw(rng);
                x[k + 1] = self.priors.logit_phi.draw(rng);
                (x[k], logistic(x[k + 1]))
            }
            None => (0.0, 1.0),
        };
        let mut prev = eta0;
        for slot in x.iter_mut().take(self.n) {
            let mean = self.transition_mean(prev, mu, phi);
            *slot = mean + eps * rng.sample::<f64, _>(StandardNormal);
            prev = *slot;
        }
        #[allow(clippy::needless_range_loop)]
        for i in 0..self.n {
            if let Some(k) = self.t_index[i] {
                x[k] = if self.informed {
                    let (pm, ps) = self.prior_t;
                    pm + ps * rng.sample::<f64, _>(StandardNormal)
                } else {
                    self.ln_m[i] + 0.5 * rng.sample::<f64, _>(StandardNormal)
                };
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::check_gradient;
    use crate::seed::stream_rng;

    fn me3() -> MeasurementErrorInput {
        MeasurementErrorInput::new(
            vec![0.65, 0.72, 0.58],
            vec![0.08, 0.10, 0.07],
            0.7,
            0.15,
        )
        .unwrap()
    }

    fn premiums3() -> Vec<f64> {
        vec![900.0, 1100.0, 1250.0]
    }

    fn rw3() -> ForecastModel {
        ForecastModel::new(ForecastKind::RandomWalk, me3(), premiums3(), ForecastPriors::defaults(1.0))
            .unwrap()
    }

    fn mr3() -> ForecastModel {
        ForecastModel::new(ForecastKind::MeanReversion, me3(), premiums3(), ForecastPriors::defaults(1.0))
            .unwrap()
    }

    /// Independent density computation, written directly from the model
    /// definition: transitions, lognormal observation of r', lognormal
    /// measurement of m around mu_xi, moment-matched prior on r', and
    /// parameter priors. Works in the same (log r') coordinates.
    fn oracle_density(model_is_mr: bool, x: &[f64], me: &MeasurementErrorInput, p: &[f64]) -> f64 {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let norm = |v: f64, m: f64, s: f64| -s.ln() - 0.5 * ln2pi - (v - m).powi(2) / (2.0 * s * s);
        let n = 3;
        let eta = &x[..n];
        let eta0 = x[n];
        let le = x[n + 1];
        let eps = le.exp();
        let (g1, g2) = (x[n + 2], x[n + 3]);
        let (mu, f) = if model_is_mr { (x[n + 4], x[n + 5]) } else { (0.0, 0.0) };
        let phi = 1.0 / (1.0 + (-f).exp());
        let t_off = if model_is_mr { n + 6 } else { n + 4 };
        let mut lp = 0.0;
        for i in 0..n {
            let prev = if i == 0 { eta0 } else { eta[i - 1] };
            let mean = if model_is_mr { mu * (1.0 - phi) + phi * prev } else { prev };
            lp += norm(eta[i], mean, eps);
        }
        for i in 0..n {
            let t = x[t_off + i];
            let r = t.exp();
            let s_i = (g1.exp().powi(2) + g2.exp().powi(2) / p[i].sqrt()).sqrt();
            // Lognormal(r' | eta, sigma) in t coordinates: Normal pdf at t
            // minus... the change of variables gives Normal(t) exactly.
            lp += norm(t, eta[i], s_i);
            // Measurement term.
            let s = me.sds()[i];
            let m = me.means()[i];
            let mu_xi = (r * r / (r * r + s * s).sqrt()).ln();
            let sigma_xi = (1.0 + (s / m) * (s / m)).ln().sqrt();
            lp += -m.ln() - sigma_xi.ln() - 0.5 * ln2pi - (m.ln() - mu_xi).powi(2) / (2.0 * sigma_xi * sigma_xi);
            // Prior on r' (lognormal, in t coordinates).
            let pm = (me.prior_mean * me.prior_mean
                / (me.prior_mean * me.prior_mean + me.prior_sd * me.prior_sd).sqrt())
            .ln();
            let ps = (1.0 + (me.prior_sd / me.prior_mean).powi(2)).ln().sqrt();
            lp += norm(t, pm, ps);
        }
        lp += norm(le, -0.5, 1.0) + norm(eta0, 0.0, 1.0) + norm(g1, -2.0, 1.0) + norm(g2, -2.0, 1.0);
        if model_is_mr {
            lp += norm(mu, -1.0, 1.0) + norm(f, 0.0, 1.0);
        }
        lp
    }

    #[test]
    fn rw_density_matches_oracle() {
        let model = rw3();
        let x = vec![-0.4, -0.35, -0.5, -0.3, -1.2, -2.1, -2.3, -0.45, -0.38, -0.55];
        let (lp, _) = model.log_density_gradient(&x);
        let expected = oracle_density(false, &x, &me3(), &premiums3());
        assert!((lp - expected).abs() < 1e-10, "{lp} vs {expected}");
    }

    #[test]
    fn mr_density_matches_oracle() {
        let model = mr3();
        let x = vec![-0.4, -0.35, -0.5, -0.3, -1.2, -2.1, -2.3, -0.8, 0.4, -0.45, -0.38, -0.55];
        let (lp, _) = model.log_density_gradient(&x);
        let expected = oracle_density(true, &x, &me3(), &premiums3());
        assert!((lp - expected).abs() < 1e-10, "{lp} vs {expected}");
    }

    #[test]
    fn mr_with_phi_one_reduces_to_rw() {
        let rw = rw3();
        let mr = mr3();
        let shared = vec![-0.4, -0.35, -0.5, -0.3, -1.2, -2.1, -2.3];
        let ts = [-0.45, -0.38, -0.55];
        let mu = -0.7;
        let f = 40.0; // logistic(40) rounds to exactly 1.0 in f64
        let mut x_rw = shared.clone();
        x_rw.extend_from_slice(&ts);
        let mut x_mr = shared.clone();
        x_mr.push(mu);
        x_mr.push(f);
        x_mr.extend_from_slice(&ts);
        let (lp_rw, _) = rw.log_density_gradient(&x_rw);
        let (lp_mr, _) = mr.log_density_gradient(&x_mr);
        let extra = normal_logpdf(mu, -1.0, 1.0) + normal_logpdf(f, 0.0, 1.0);
        assert!(
            (lp_mr - extra - lp_rw).abs() < 1e-12,
            "mr {lp_mr} minus priors {extra} vs rw {lp_rw}"
        );
    }

    #[test]
    fn mr_with_phi_zero_is_iid_around_mu() {
        // logit phi = -40 makes the transition mean exactly mu for every
        // year, so with equal premiums and equal latent ratios the density
        // is invariant under permutations of eta.
        let mu = -0.7;
        let model = ForecastModel::new(
            ForecastKind::MeanReversion,
            me3(),
            vec![1000.0; 3],
            ForecastPriors::defaults(1.0),
        )
        .unwrap();
        let tail = [-0.3, -1.2, -2.1, -2.3, mu, -40.0, -0.5, -0.5, -0.5];
        let mut x = vec![-0.65, -0.75, -0.72];
        x.extend_from_slice(&tail);
        let mut x_perm = vec![-0.72, -0.65, -0.75];
        x_perm.extend_from_slice(&tail);
        let (a, _) = model.log_density_gradient(&x);
        let (b, _) = model.log_density_gradient(&x_perm);
        assert!((a - b).abs() < 1e-10, "iid latent block should be exchangeable: {a} vs {b}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream_rng(31, 0);
        for model in [rw3(), mr3()] {
            for _ in 0..20 {
                let x = model.sample_prior(&mut rng);
                let err = check_gradient(&model, &x, 1e-5).unwrap();
                assert!(err < 1e-5, "{:?}: gradient error {err}", model.kind());
            }
        }
    }

    #[test]
    fn gradient_with_exact_observation() {
        let me = MeasurementErrorInput::new(
            vec![0.65, 0.72, 0.58],
            vec![0.0, 0.10, 0.07],
            0.7,
            0.15,
        )
        .unwrap();
        assert!(me.is_exact(0));
        let model =
            ForecastModel::new(ForecastKind::RandomWalk, me, premiums3(), ForecastPriors::defaults(1.0))
                .unwrap();
        assert_eq!(model.space().dim(), 3 + 4 + 2, "one latent ratio dropped");
        let mut rng = stream_rng(32, 0);
        for _ in 0..20 {
            let x = model.sample_prior(&mut rng);
            let err = check_gradient(&model, &x, 1e-5).unwrap();
            assert!(err < 1e-5, "gradient error {err}");
        }
    }

    #[test]
    fn tiny_measurement_sd_pins_latent_ratio_at_mean() {
        let m = 0.65;
        let me = MeasurementErrorInput::new(vec![m], vec![1e-6], 0.7, 0.15).unwrap();
        assert!(!me.is_exact(0));
        let model = ForecastModel::new(
            ForecastKind::RandomWalk,
            me,
            vec![1000.0],
            ForecastPriors::defaults(1.0),
        )
        .unwrap();
        let base = vec![m.ln(), -0.3, -1.2, -2.1, -2.3, m.ln()];
        let mut off = base.clone();
        off[5] = m.ln() + 0.01;
        let (lp_at, _) = model.log_density_gradient(&base);
        let (lp_off, _) = model.log_density_gradient(&off);
        assert!(lp_at - lp_off > 1000.0, "posterior of r' must collapse: {lp_at} vs {lp_off}");
    }

    #[test]
    fn frozen_walk_pins_latents_at_eta0() {
        let model = rw3();
        let eta0 = -0.45;
        // log eps = -20: transitions freeze.
        let mut base = vec![eta0, eta0, eta0, eta0, -20.0, -2.1, -2.3, -0.45, -0.38, -0.55];
        let (lp_at, _) = model.log_density_gradient(&base);
        base[1] = eta0 + 0.01;
        let (lp_off, _) = model.log_density_gradient(&base);
        assert!(lp_at - lp_off > 1000.0, "{lp_at} vs {lp_off}");
    }

    #[test]
    fn observation_noise_decreases_with_premium() {
        let (g1, g2) = (-2.0, -1.5);
        let mut last = f64::INFINITY;
        for p in [10.0, 100.0, 1000.0, 10000.0] {
            let s = obs_sigma_sq(g1, g2, p).sqrt();
            assert!(s < last, "sigma at premium {p} = {s}");
            last = s;
        }
    }

    #[test]
    fn input_validation() {
        assert!(MeasurementErrorInput::new(vec![], vec![], 0.7, 0.1).is_err());
        assert!(MeasurementErrorInput::new(vec![0.5], vec![0.1, 0.2], 0.7, 0.1).is_err());
        assert!(MeasurementErrorInput::new(vec![-0.5], vec![0.1], 0.7, 0.1).is_err());
        assert!(MeasurementErrorInput::new(vec![0.5], vec![0.1], 0.7, 0.0).is_err());
        let me = me3();
        assert!(ForecastModel::new(
            ForecastKind::RandomWalk,
            me,
            vec![1.0, 2.0],
            ForecastPriors::defaults(1.0)
        )
        .is_err());
    }
}

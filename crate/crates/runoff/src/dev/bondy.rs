//! Generalized Bondy tail model.
//!
//! Link ratios decay parametrically: `alpha_ij = omega^(beta^j)` with
//! asymptote `omega >= 1` and decay rate `beta` in (0, 1), fitted to the
//! window `max(2, rho1) <= j <= rho2`. The sampler works on
//! `v = log log omega` with a half-normal prior on `log omega`, and on
//! `logit beta` directly.

use rand::RngCore;

use crate::dev::{dev_sigma, sample_dev_prior, BondyParams, DevConfig};
use crate::error::{Error, Result};
use crate::inference::params::{logistic, Constraint, ParameterSpace};
use crate::inference::LogDensityModel;
use crate::math::{lognormal_logpdf, normal_logpdf, LN_2PI};
use crate::triangle::Triangle;

/// Age-to-age factor `omega^(beta^j)` at development lag `j`.
pub fn bondy_link_ratio(omega: f64, beta: f64, j: usize) -> f64 {
    omega.powf(beta.powi(j as i32))
}

#[derive(Debug, Clone)]
pub struct BondyModel {
    space: ParameterSpace,
    ratios: Vec<Vec<f64>>,
    window: (usize, usize),
    kappa: f64,
    sigma_scale: f64,
}

impl BondyModel {
    pub fn new(triangle: &Triangle, cfg: &DevConfig) -> Result<Self> {
        cfg.validate(triangle.n_dev_lags())?;
        let lo = cfg.rho.0.max(2);
        let hi = cfg.rho.1;
        let ratios = triangle.loss_ratios().values;
        let in_window: usize =
            ratios.iter().map(|row| (row.len().min(hi) + 1).saturating_sub(lo)).sum();
        if in_window == 0 {
            return Err(Error::validation(format!(
                "triangle {}: no observed cells with {lo} <= j <= {hi}",
                triangle.id()
            )));
        }
        let space = ParameterSpace::builder()
            .scalar("omega", Constraint::LowerBoundedAtOne)
            .scalar("beta", Constraint::UnitInterval)
            .scalar("lambda1", Constraint::Unbounded)
            .scalar("lambda2", Constraint::Unbounded)
            .build()?;
        Ok(Self { space, ratios, window: (lo, hi), kappa: cfg.kappa, sigma_scale: 1.0 })
    }

    pub fn with_sigma_scale(mut self, scale: f64) -> Self {
        self.sigma_scale = scale;
        self
    }

    pub fn params_from(&self, position: &[f64]) -> BondyParams {
        BondyParams {
            log_omega: position[0].exp(),
            logit_beta: position[1],
            lambda1: position[2],
            lambda2: position[3],
        }
    }

    /// Read parameters back from a constrained draw row `(omega, beta, lambda1, lambda2)`.
    pub fn params_from_constrained(&self, row: &[f64]) -> BondyParams {
        BondyParams {
            log_omega: row[0].ln(),
            logit_beta: (row[1] / (1.0 - row[1])).ln(),
            lambda1: row[2],
            lambda2: row[3],
        }
    }

    /// Joint log likelihood of the in-window cells at `params` (no priors).
    pub fn log_likelihood(&self, params: &BondyParams) -> f64 {
        let (lo, hi) = self.window;
        let (u, beta) = (params.log_omega, params.beta());
        let mut lp = 0.0;
        for row in &self.ratios {
            for j in lo..=row.len().min(hi) {
                let prev = row[j - 2];
                let mu = u * beta.powi(j as i32) + prev.ln();
                let sigma = dev_sigma(params.lambda1, params.lambda2, j, prev) * self.sigma_scale;
                lp += lognormal_logpdf(row[j - 1], mu, sigma);
            }
        }
        lp
    }
}

impl LogDensityModel for BondyModel {
    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
        let (v, b, lambda1, lambda2) = (position[0], position[1], position[2], position[3]);
        let u = v.exp(); // log omega >= 0
        let beta = logistic(b);
        let mut lp = 0.0;
        let mut grad = vec![0.0; 4];

        let (lo, hi) = self.window;
        let c2 = self.sigma_scale * self.sigma_scale;
        for row in &self.ratios {
            for j in lo..=row.len().min(hi) {
                let prev = row[j - 2];
                let cur = row[j - 1];
                let bj = beta.powi(j as i32);
                let mu = u * bj + prev.ln();
                let s2 = (lambda1 + lambda2 * j as f64 + prev.ln()).exp() * c2;
                let z = cur.ln() - mu;
                lp += -cur.ln() - 0.5 * s2.ln() - 0.5 * LN_2PI - z * z / (2.0 * s2);
                let dmu = z / s2;
                grad[0] += dmu * u * bj;
                grad[1] += dmu * u * j as f64 * bj * (1.0 - beta);
                let dv = -0.5 + z * z / (2.0 * s2);
                grad[2] += dv;
                grad[3] += dv * j as f64;
            }
        }

        // Half-normal prior on u = log omega, evaluated in v = log u
        // coordinates with its Jacobian; normal priors elsewhere.
        let k = self.kappa;
        lp += 0.5 * (2.0 / std::f64::consts::PI).ln() - k.ln() - u * u / (2.0 * k * k) + v;
        grad[0] += -u * u / (k * k) + 1.0;
        let sb = 0.5 * k;
        lp += normal_logpdf(b, -2.0, sb);
        grad[1] += -(b + 2.0) / (sb * sb);
        let s1 = 0.25 * k;
        lp += normal_logpdf(lambda1, -3.0, s1);
        grad[2] += -(lambda1 + 3.0) / (s1 * s1);
        let s2p = 0.1 * k;
        lp += normal_logpdf(lambda2, -1.0, s2p);
        grad[3] += -(lambda2 + 1.0) / (s2p * s2p);

        (lp, grad)
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let cfg = DevConfig { tau: 2, rho: self.window, j_max: 4 * self.window.1, kappa: self.kappa };
        let (_, bondy) = sample_dev_prior(&cfg, self.window.1, rng);
        vec![bondy.log_omega.max(1e-12).ln(), bondy.logit_beta, bondy.lambda1, bondy.lambda2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::check_gradient;
    use crate::seed::stream_rng;

    #[test]
    #[allow(clippy::approx_constant)]
    fn link_ratio_formula() {
        assert_eq!(bondy_link_ratio(1.0, 0.3, 5), 1.0);
        assert!((bondy_link_ratio(2.0, 0.5, 1) - 2f64.powf(0.5)).abs() < 1e-12);
        assert!((bondy_link_ratio(2.0, 0.5, 1) - 1.41421).abs() < 1e-5);
    }

    #[test]
    fn link_ratios_decay_to_one() {
        let (omega, beta) = (1.8, 0.6);
        let mut last = f64::INFINITY;
        for j in 1..=40 {
            let a = bondy_link_ratio(omega, beta, j);
            assert!(a < last && a > 1.0, "lag {j}: {a}");
            last = a;
        }
        assert!((last - 1.0).abs() < 1e-6);
        // Total future development is finite: omega^(sum beta^j) for j > J.
        let total: f64 = omega.powf(beta.powi(11) / (1.0 - beta));
        assert!(total.is_finite() && total > 1.0);
    }

    fn tail_triangle() -> Triangle {
        let rows = vec![
            vec![100.0, 150.0, 165.0, 170.0, 171.0],
            vec![110.0, 160.0, 176.0, 180.0],
            vec![105.0, 158.0, 172.0],
            vec![95.0, 140.0],
            vec![101.0],
        ];
        Triangle::new("T1", "WC", rows, vec![300.0; 5], vec![1, 2, 3, 4, 5]).unwrap()
    }

    #[test]
    fn density_matches_independent_oracle() {
        let t = tail_triangle();
        let cfg = DevConfig { tau: 2, rho: (3, 5), j_max: 20, kappa: 1.0 };
        let model = BondyModel::new(&t, &cfg).unwrap();
        let position = vec![-0.5, -1.8, -3.1, -0.9];

        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let u = (-0.5f64).exp();
        let beta = 1.0 / (1.0 + (1.8f64).exp());
        let r = t.loss_ratios().values;
        let mut expected = 0.0;
        for row in &r {
            for j in 3..=row.len().min(5) {
                let prev = row[j - 2];
                let mu = u * beta.powi(j as i32) + prev.ln();
                let s = (position[2] + position[3] * j as f64 + prev.ln()).exp().sqrt();
                let y = row[j - 1];
                expected += -y.ln() - s.ln() - 0.5 * ln2pi - (y.ln() - mu).powi(2) / (2.0 * s * s);
            }
        }
        // Half-normal on u (in v coordinates, with Jacobian) and normal priors.
        expected += 0.5 * (2.0 / std::f64::consts::PI).ln() - u * u / 2.0 + position[0];
        let norm = |x: f64, m: f64, s: f64| {
            -s.ln() - 0.5 * ln2pi - (x - m).powi(2) / (2.0 * s * s)
        };
        expected += norm(position[1], -2.0, 0.5);
        expected += norm(position[2], -3.0, 0.25);
        expected += norm(position[3], -1.0, 0.1);

        let (lp, _) = model.log_density_gradient(&position);
        assert!((lp - expected).abs() < 1e-10, "{lp} vs {expected}");
    }

    #[test]
    fn gradient_matches_finite_differences_at_prior_points() {
        let t = tail_triangle();
        let cfg = DevConfig { tau: 2, rho: (3, 5), j_max: 20, kappa: 1.0 };
        let model = BondyModel::new(&t, &cfg).unwrap();
        let mut rng = stream_rng(22, 0);
        for _ in 0..20 {
            let point = model.sample_prior(&mut rng);
            let err = check_gradient(&model, &point, 1e-5).unwrap();
            assert!(err < 1e-5, "gradient error {err} at {point:?}");
        }
    }

    #[test]
    fn constrained_reporting_round_trip() {
        let t = tail_triangle();
        let cfg = DevConfig { tau: 2, rho: (3, 5), j_max: 20, kappa: 1.0 };
        let model = BondyModel::new(&t, &cfg).unwrap();
        let position = vec![0.3, -1.0, -3.0, -1.0];
        let constrained = model.space().constrain(&position);
        assert!(constrained[0] >= 1.0, "omega = {}", constrained[0]);
        assert!(constrained[1] > 0.0 && constrained[1] < 1.0);
        let params = model.params_from(&position);
        assert!((params.omega() - constrained[0]).abs() < 1e-12);
        assert!((params.beta() - constrained[1]).abs() < 1e-12);
    }
}

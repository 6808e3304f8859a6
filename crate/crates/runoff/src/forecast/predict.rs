//! Posterior prediction for the state-space forecasters: in-sample
//! predictive draws, one-step-ahead forecasts, and multi-year rollouts.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::forecast::state_space::{obs_sigma_sq, ForecastKind};
use crate::inference::DrawMatrix;
use crate::math::lognormal_logpdf;
use crate::seed::stream_rng;

/// Column names of one program's parameters inside a draw matrix, covering
/// both single-program fits and blocks of a hierarchical fit.
#[derive(Debug, Clone)]
pub struct ProgramNames {
    pub eta: Vec<String>,
    pub eta0: String,
    pub eps: String,
    pub gamma: [String; 2],
    pub mu_phi: Option<[String; 2]>,
}

impl ProgramNames {
    /// Names used by a single-program [`super::ForecastModel`] fit.
    pub fn single(n_years: usize, kind: ForecastKind) -> Self {
        Self {
            eta: (1..=n_years).map(|i| format!("eta[{i}]")).collect(),
            eta0: "eta0".into(),
            eps: "eps".into(),
            gamma: ["fc_gamma[1]".into(), "fc_gamma[2]".into()],
            mu_phi: (kind == ForecastKind::MeanReversion).then(|| ["mu".into(), "phi".into()]),
        }
    }

    /// Names of program `g` (1-based) inside a hierarchical fit.
    pub fn grouped(g: usize, n_years: usize, kind: ForecastKind) -> Self {
        Self {
            eta: (1..=n_years).map(|i| format!("eta_g{g}[{i}]")).collect(),
            eta0: format!("eta0_g{g}"),
            eps: format!("eps_g{g}"),
            gamma: [format!("fc_gamma_g{g}[1]"), format!("fc_gamma_g{g}[2]")],
            mu_phi: (kind == ForecastKind::MeanReversion)
                .then(|| [format!("mu_g{g}"), format!("phi_g{g}")]),
        }
    }
}

/// Resolved column indices for fast per-draw extraction.
#[derive(Debug, Clone)]
pub struct ProgramView {
    kind: ForecastKind,
    eta: Vec<usize>,
    eps: usize,
    g1: usize,
    g2: usize,
    mu_phi: Option<(usize, usize)>,
}

impl ProgramView {
    pub fn resolve(draws: &DrawMatrix, names: &ProgramNames) -> Result<Self> {
        let eta = names.eta.iter().map(|n| draws.index_of(n)).collect::<Result<Vec<_>>>()?;
        if eta.is_empty() {
            return Err(Error::validation("program block has no latent states"));
        }
        let kind = if names.mu_phi.is_some() {
            ForecastKind::MeanReversion
        } else {
            ForecastKind::RandomWalk
        };
        Ok(Self {
            kind,
            eta,
            eps: draws.index_of(&names.eps)?,
            g1: draws.index_of(&names.gamma[0])?,
            g2: draws.index_of(&names.gamma[1])?,
            mu_phi: match &names.mu_phi {
                Some([m, p]) => Some((draws.index_of(m)?, draws.index_of(p)?)),
                None => None,
            },
        })
    }

    pub fn n_years(&self) -> usize {
        self.eta.len()
    }

    /// Parameters of draw `s` (flat index).
    pub fn params(&self, draws: &DrawMatrix, s: usize) -> ProgramParams {
        let row = draws.draw_flat(s);
        let (mu, phi) = match self.mu_phi {
            Some((m, p)) => (row[m], row[p]),
            None => (0.0, 1.0),
        };
        ProgramParams {
            kind: self.kind,
            eta: self.eta.iter().map(|&q| row[q]).collect(),
            eps: row[self.eps],
            g1: row[self.g1],
            g2: row[self.g2],
            mu,
            phi,
        }
    }
}

/// One posterior draw of a program's forecaster parameters.
#[derive(Debug, Clone)]
pub struct ProgramParams {
    pub kind: ForecastKind,
    /// Latent log loss ratios, years `1..=N`.
    pub eta: Vec<f64>,
    pub eps: f64,
    /// Observation-noise coefficients (gamma1, gamma2).
    pub g1: f64,
    pub g2: f64,
    pub mu: f64,
    pub phi: f64,
}

impl ProgramParams {
    pub fn obs_sigma(&self, premium: f64) -> f64 {
        obs_sigma_sq(self.g1, self.g2, premium).sqrt()
    }

    fn transition_mean(&self, prev: f64) -> f64 {
        match self.kind {
            ForecastKind::RandomWalk => prev,
            ForecastKind::MeanReversion => self.mu * (1.0 - self.phi) + self.phi * prev,
        }
    }

    /// Predictive log density of the observed ratio at in-sample year `i` (1-based).
    pub fn insample_logpdf(&self, i: usize, ratio: f64, premium: f64) -> f64 {
        lognormal_logpdf(ratio, self.eta[i - 1], self.obs_sigma(premium))
    }

    /// Predictive draw of the ratio at in-sample year `i`.
    pub fn insample_draw(&self, i: usize, premium: f64, rng: &mut impl Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.eta[i - 1] + self.obs_sigma(premium) * z).exp()
    }

    /// One-step-ahead predictive log density for year `N + 1`: the latent
    /// transition convolves with observation noise, so the ratio is
    /// lognormal with variance `eps^2 + sigma^2`.
    pub fn onestep_logpdf(&self, ratio: f64, premium: f64) -> f64 {
        let mean = self.transition_mean(*self.eta.last().expect("nonempty state"));
        let sd = (self.eps * self.eps + obs_sigma_sq(self.g1, self.g2, premium)).sqrt();
        lognormal_logpdf(ratio, mean, sd)
    }

    /// Sampled one-step-ahead predictive ratio for year `N + 1`.
    pub fn onestep_draw(&self, premium: f64, rng: &mut impl Rng) -> f64 {
        let z1: f64 = rng.sample(StandardNormal);
        let eta = self.transition_mean(*self.eta.last().expect("nonempty state")) + self.eps * z1;
        let z2: f64 = rng.sample(StandardNormal);
        (eta + self.obs_sigma(premium) * z2).exp()
    }
}

/// Multi-year predictive draws of loss ratios and losses.
#[derive(Debug, Clone)]
pub struct ForecastDraws {
    /// `ratios[h-1][s]` = predictive loss ratio for year `N + h`, draw `s`.
    pub ratios: Vec<Vec<f64>>,
    /// `losses[h-1][s] = ratios[h-1][s] * premium(N + h)`.
    pub losses: Vec<Vec<f64>>,
}

impl ForecastDraws {
    pub fn horizon(&self) -> usize {
        self.ratios.len()
    }

    /// Write `(triangle_id, accident_year, draw, loss_ratio, loss)` rows,
    /// with accident years continuing after `n_observed`.
    pub fn write_csv(
        &self,
        writer: &mut csv::Writer<impl std::io::Write>,
        triangle_id: &str,
        n_observed: usize,
    ) -> Result<()> {
        for (h, (ratios, losses)) in self.ratios.iter().zip(&self.losses).enumerate() {
            for (s, (r, y)) in ratios.iter().zip(losses).enumerate() {
                writer.write_record([
                    triangle_id,
                    &(n_observed + h + 1).to_string(),
                    &s.to_string(),
                    &r.to_string(),
                    &y.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    pub fn csv_header() -> [&'static str; 5] {
        ["triangle_id", "accident_year", "draw", "loss_ratio", "loss"]
    }
}

/// Roll the latent state forward `horizon` years per posterior draw and emit
/// observation-level draws. `premiums_future[h-1]` feeds the observation
/// noise and the loss conversion for year `N + h`.
pub fn forecast(
    draws: &DrawMatrix,
    kind: ForecastKind,
    horizon: usize,
    premiums_future: &[f64],
    seed: u64,
) -> Result<ForecastDraws> {
    if horizon == 0 {
        return Err(Error::validation("forecast horizon must be >= 1"));
    }
    if premiums_future.len() < horizon {
        return Err(Error::validation(format!(
            "{} future premiums supplied for horizon {horizon}",
            premiums_future.len()
        )));
    }
    if premiums_future.iter().any(|&p| !p.is_finite() || p <= 0.0) {
        return Err(Error::validation("future premiums must be positive"));
    }
    let n = (1..)
        .take_while(|i| draws.index_of(&format!("eta[{i}]")).is_ok())
        .count();
    if n == 0 {
        return Err(Error::validation("draw matrix has no 'eta[i]' columns"));
    }
    let view = ProgramView::resolve(draws, &ProgramNames::single(n, kind))?;
    forecast_program(draws, &view, horizon, premiums_future, seed)
}

/// As [`forecast`], for an already-resolved program block.
pub fn forecast_program(
    draws: &DrawMatrix,
    view: &ProgramView,
    horizon: usize,
    premiums_future: &[f64],
    seed: u64,
) -> Result<ForecastDraws> {
    let s_total = draws.total_draws();
    let mut ratios = vec![Vec::with_capacity(s_total); horizon];
    let mut losses = vec![Vec::with_capacity(s_total); horizon];
    for s in 0..s_total {
        let p = view.params(draws, s);
        let mut rng = stream_rng(seed, s as u64);
        let mut eta = *p.eta.last().expect("nonempty state");
        for h in 0..horizon {
            let z1: f64 = rng.sample(StandardNormal);
            eta = p.transition_mean(eta) + p.eps * z1;
            let z2: f64 = rng.sample(StandardNormal);
            let r = (eta + p.obs_sigma(premiums_future[h]) * z2).exp();
            ratios[h].push(r);
            losses[h].push(r * premiums_future[h]);
        }
    }
    Ok(ForecastDraws { ratios, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{DrawMatrix, SamplerMeta};

    fn single_draw_matrix(kind: ForecastKind, eta: &[f64], eps: f64, g: f64, mu: f64, phi: f64, reps: usize) -> DrawMatrix {
        let mut names: Vec<String> = (1..=eta.len()).map(|i| format!("eta[{i}]")).collect();
        names.extend(["eta0".into(), "eps".into(), "fc_gamma[1]".into(), "fc_gamma[2]".into()]);
        let mut row = eta.to_vec();
        row.extend([eta[0], eps, g, g]);
        if kind == ForecastKind::MeanReversion {
            names.extend(["mu".into(), "phi".into()]);
            row.extend([mu, phi]);
        }
        let dim = row.len();
        let values: Vec<f64> = row.into_iter().cycle().take(reps * dim).collect();
        let meta = SamplerMeta {
            seed: 0,
            divergences: vec![0],
            step_sizes: vec![0.1],
            accept_rates: vec![0.9],
        };
        DrawMatrix::from_parts(names, 1, reps, values, meta).unwrap()
    }

    #[test]
    fn noiseless_forecast_holds_last_level() {
        let d = single_draw_matrix(ForecastKind::RandomWalk, &[-0.5, -0.4], 1e-14, -40.0, 0.0, 0.0, 3);
        let f = forecast(&d, ForecastKind::RandomWalk, 3, &[1000.0; 3], 1).unwrap();
        for h in 0..3 {
            for &r in &f.ratios[h] {
                assert!((r - (-0.4f64).exp()).abs() < 1e-9, "h={h}: {r}");
            }
        }
    }

    #[test]
    fn instant_reversion_forecasts_mu() {
        // phi = 0 with noiseless transitions and observations: exp(mu).
        let d = single_draw_matrix(ForecastKind::MeanReversion, &[-0.2], 1e-14, -40.0, -0.9, 0.0, 2);
        let f = forecast(&d, ForecastKind::MeanReversion, 2, &[500.0; 2], 2).unwrap();
        for h in 0..2 {
            for &r in &f.ratios[h] {
                assert!((r - (-0.9f64).exp()).abs() < 1e-9, "h={h}: {r}");
            }
        }
    }

    #[test]
    fn one_step_moments_match_analytic_convolution() {
        let (eta_n, eps, g) = (-0.4, 0.3, -2.0);
        let premium = 1.0; // sigma^2 = 2 exp(2g) at unit premium
        let reps = 200_000;
        let d = single_draw_matrix(ForecastKind::RandomWalk, &[0.0, eta_n], eps, g, 0.0, 0.0, reps);
        let f = forecast(&d, ForecastKind::RandomWalk, 1, &[premium], 3).unwrap();
        let v = eps * eps + obs_sigma_sq(g, g, premium);
        let expect_mean = (eta_n + 0.5 * v).exp();
        let expect_sd = expect_mean * (v.exp_m1()).sqrt();
        let (mean, sd) = crate::math::mean_sd(&f.ratios[0]);
        let se_mean = expect_sd / (reps as f64).sqrt();
        assert!((mean - expect_mean).abs() < 4.0 * se_mean, "{mean} vs {expect_mean}");
        assert!((sd - expect_sd).abs() < 0.02 * expect_sd, "{sd} vs {expect_sd}");
    }

    #[test]
    fn missing_premiums_rejected() {
        let d = single_draw_matrix(ForecastKind::RandomWalk, &[0.0], 0.1, -2.0, 0.0, 0.0, 2);
        assert!(forecast(&d, ForecastKind::RandomWalk, 3, &[100.0], 4).is_err());
        assert!(forecast(&d, ForecastKind::RandomWalk, 0, &[100.0], 4).is_err());
    }

    #[test]
    fn onestep_density_integrates_draws() {
        // Percentile of truth under onestep_draw should match the analytic
        // lognormal CDF implied by onestep_logpdf parameters.
        let d = single_draw_matrix(ForecastKind::RandomWalk, &[-0.3], 0.25, -2.2, 0.0, 0.0, 1);
        let view = ProgramView::resolve(&d, &ProgramNames::single(1, ForecastKind::RandomWalk)).unwrap();
        let p = view.params(&d, 0);
        let premium = 700.0;
        let truth = 0.75;
        let mut rng = crate::seed::stream_rng(9, 0);
        let below = (0..100_000)
            .filter(|_| p.onestep_draw(premium, &mut rng) < truth)
            .count() as f64
            / 100_000.0;
        let sd = (p.eps * p.eps + obs_sigma_sq(p.g1, p.g2, premium)).sqrt();
        let z = (truth.ln() - p.eta[0]) / sd;
        let analytic = 0.5 * (1.0 + erf(z / 2f64.sqrt()));
        assert!((below - analytic).abs() < 0.01, "{below} vs {analytic}");
    }

    fn erf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26.
        let sign = x.signum();
        let x = x.abs();
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
                + 0.254829592)
                * t
                * (-x * x).exp();
        sign * y
    }
}

//! Static Hamiltonian Monte Carlo with dual-averaging step-size adaptation
//! and a diagonal mass matrix estimated during warmup.
//!
//! The path length is jittered: each transition runs a uniform number of
//! leapfrog steps between 1 and `round(1 / step_size)`, capped by the
//! configured maximum. Divergences are flagged when the energy error of a
//! proposal exceeds 1000. Chains run on independent counter-based RNG
//! streams, so results are bit-identical no matter how chains are scheduled.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::draws::{DrawMatrix, SamplerMeta};
use crate::inference::model::{check_gradient, LogDensityModel};
use crate::seed::stream_rng;

/// Sampler settings. Defaults follow the calibration setup used throughout
/// the crate: 4 chains of 1000 warmup + 1000 sampling iterations at a 0.8
/// acceptance target.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_leapfrog: usize,
    /// Integration time per transition; the leapfrog count is jittered
    /// uniformly in `1..=round(path_length / step_size)`.
    pub path_length: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            target_accept: 0.8,
            max_leapfrog: 1024,
            path_length: 4.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.warmup == 0 || self.draws == 0 || self.max_leapfrog == 0 {
            return Err(Error::validation("sampler counts must be >= 1"));
        }
        if self.target_accept.is_nan() || self.target_accept <= 0.0 || self.target_accept >= 1.0 {
            return Err(Error::validation("target acceptance must be in (0, 1)"));
        }
        if !self.path_length.is_finite() || self.path_length <= 0.0 {
            return Err(Error::validation("path length must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

const DIVERGENCE_ENERGY: f64 = 1000.0;
const INIT_RETRIES: usize = 100;
const GRADIENT_GATE: f64 = 1e-4;

/// Draw from `model`'s posterior. Deterministic given `(seed, cfg, model, data)`.
///
/// The model's gradient is checked against finite differences at a prior
/// draw before any chain starts; a mismatch is fatal.
pub fn sample(model: &dyn LogDensityModel, cfg: &SamplerConfig) -> Result<DrawMatrix> {
    cfg.validate()?;
    gradient_gate(model, cfg.seed)?;

    let results: Result<Vec<ChainRun>> = (0..cfg.chains)
        .into_par_iter()
        .map(|chain| run_chain(model, cfg, chain))
        .collect();
    let results = results?;

    let mut names = model.space().flat_names().to_vec();
    names.extend(model.derived_names());
    let dim = names.len();
    let mut values = Vec::with_capacity(cfg.chains * cfg.draws * dim);
    let mut divergences = Vec::with_capacity(cfg.chains);
    let mut step_sizes = Vec::with_capacity(cfg.chains);
    let mut accept_rates = Vec::with_capacity(cfg.chains);
    for run in results {
        values.extend(run.draws);
        divergences.push(run.divergences);
        step_sizes.push(run.step_size);
        accept_rates.push(run.accept_rate);
    }
    let meta = SamplerMeta { seed: cfg.seed, divergences, step_sizes, accept_rates };
    DrawMatrix::from_parts(names, cfg.chains, cfg.draws, values, meta)
}

/// Fraction of divergent transitions across all sampling iterations.
pub fn divergence_fraction(draws: &DrawMatrix) -> f64 {
    draws.meta().total_divergences() as f64 / draws.total_draws() as f64
}

fn gradient_gate(model: &dyn LogDensityModel, seed: u64) -> Result<()> {
    let mut rng = stream_rng(seed, u64::MAX);
    let mut last_err = None;
    for _ in 0..10 {
        let point = model.sample_prior(&mut rng);
        match check_gradient(model, &point, 1e-5) {
            Ok(err) if err <= GRADIENT_GATE => return Ok(()),
            Ok(err) => {
                return Err(Error::computation(format!(
                    "gradient check failed: max relative error {err:.3e} at a prior draw"
                )));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::computation("gradient check failed")))
}

struct ChainRun {
    draws: Vec<f64>,
    divergences: usize,
    step_size: f64,
    accept_rate: f64,
}

fn run_chain(model: &dyn LogDensityModel, cfg: &SamplerConfig, chain: usize) -> Result<ChainRun> {
    let dim = model.space().dim();
    let mut rng = stream_rng(cfg.seed, 1 + chain as u64);

    // Initialize from the prior, retrying on non-finite density.
    let mut position = Vec::new();
    let mut lp = f64::NEG_INFINITY;
    let mut grad = vec![0.0; dim];
    let mut ok = false;
    for _ in 0..INIT_RETRIES {
        position = model.sample_prior(&mut rng);
        let (l, g) = model.log_density_gradient(&position);
        if l.is_finite() && g.iter().all(|v| v.is_finite()) {
            lp = l;
            grad = g;
            ok = true;
            break;
        }
    }
    if !ok {
        return Err(Error::computation(format!(
            "chain {chain}: non-finite density at initialization after {INIT_RETRIES} prior draws"
        )));
    }

    let mut inv_mass = vec![1.0; dim];
    let mut state = State { position, lp, grad };
    let mut adapt = DualAverage::new(0.1 / (dim as f64).powf(0.25), cfg.target_accept);

    // Warmup phases: step size only, then variance accumulation for the mass
    // matrix, then step-size refinement under the final metric.
    let var_start = (0.15 * cfg.warmup as f64) as usize;
    let var_end = ((0.9 * cfg.warmup as f64) as usize).max(var_start + 1).min(cfg.warmup);
    let mut welford = Welford::new(dim);
    for s in 0..cfg.warmup {
        let eps = adapt.current();
        let (alpha, _) =
            transition(model, &mut state, eps, cfg.path_length, &inv_mass, cfg.max_leapfrog, &mut rng);
        adapt.update(alpha);
        if s >= var_start && s < var_end {
            welford.push(&state.position);
        }
        if s + 1 == var_end && welford.count >= 10 {
            inv_mass = welford.regularized_variance();
            adapt = DualAverage::new(adapt.current(), cfg.target_accept);
        }
    }
    let eps = adapt.adapted();

    let mut draws = Vec::with_capacity(cfg.draws * dim);
    let mut divergences = 0usize;
    let mut accept_sum = 0.0;
    for _ in 0..cfg.draws {
        let (alpha, divergent) =
            transition(model, &mut state, eps, cfg.path_length, &inv_mass, cfg.max_leapfrog, &mut rng);
        if divergent {
            divergences += 1;
        }
        accept_sum += alpha;
        draws.extend(model.space().constrain(&state.position));
        draws.extend(model.derived(&state.position));
    }

    Ok(ChainRun {
        draws,
        divergences,
        step_size: eps,
        accept_rate: accept_sum / cfg.draws as f64,
    })
}

struct State {
    position: Vec<f64>,
    lp: f64,
    grad: Vec<f64>,
}

/// One HMC transition; returns the acceptance statistic and a divergence flag.
fn transition(
    model: &dyn LogDensityModel,
    state: &mut State,
    eps: f64,
    path_length: f64,
    inv_mass: &[f64],
    max_leapfrog: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (f64, bool) {
    let dim = state.position.len();
    let mut momentum: Vec<f64> = (0..dim)
        .map(|i| rng.sample::<f64, _>(rand_distr::StandardNormal) / inv_mass[i].sqrt())
        .collect();
    let kinetic0: f64 = 0.5 * momentum.iter().zip(inv_mass).map(|(p, im)| p * p * im).sum::<f64>();
    let h0 = -state.lp + kinetic0;

    let max_steps = ((path_length / eps).round() as usize).clamp(1, max_leapfrog);
    let steps = rng.random_range(1..=max_steps);

    let mut x = state.position.clone();
    let mut g = state.grad.clone();
    let mut lp = state.lp;
    let mut finite = true;
    for _ in 0..steps {
        for i in 0..dim {
            momentum[i] += 0.5 * eps * g[i];
        }
        for i in 0..dim {
            x[i] += eps * inv_mass[i] * momentum[i];
        }
        let (l, gr) = model.log_density_gradient(&x);
        if !l.is_finite() || gr.iter().any(|v| !v.is_finite()) {
            finite = false;
            break;
        }
        lp = l;
        g = gr;
        for i in 0..dim {
            momentum[i] += 0.5 * eps * g[i];
        }
    }

    let (alpha, divergent) = if finite {
        let kinetic1: f64 =
            0.5 * momentum.iter().zip(inv_mass).map(|(p, im)| p * p * im).sum::<f64>();
        let h1 = -lp + kinetic1;
        let delta = h1 - h0;
        if !delta.is_finite() || delta > DIVERGENCE_ENERGY {
            (0.0, true)
        } else {
            ((-delta).exp().min(1.0), false)
        }
    } else {
        (0.0, true)
    };

    let accept = alpha > 0.0 && rng.random::<f64>() < alpha;
    if accept {
        state.position = x;
        state.lp = lp;
        state.grad = g;
    }
    (alpha, divergent)
}

/// Nesterov dual averaging of the log step size (Hoffman & Gelman 2014
/// defaults: gamma 0.05, t0 10, kappa 0.75).
struct DualAverage {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
    target: f64,
}

impl DualAverage {
    fn new(eps0: f64, target: f64) -> Self {
        let eps0 = eps0.clamp(1e-10, 1e3);
        Self {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: eps0.ln(),
            h_bar: 0.0,
            t: 0.0,
            target,
        }
    }

    fn update(&mut self, alpha: f64) {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.t += 1.0;
        let frac = 1.0 / (self.t + T0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - alpha);
        self.log_eps = (self.mu - self.t.sqrt() / GAMMA * self.h_bar).clamp(LOG_EPS_MIN, LOG_EPS_MAX);
        let eta = self.t.powf(-KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

const LOG_EPS_MIN: f64 = -27.6; // ~1e-12
const LOG_EPS_MAX: f64 = 6.9; // ~1e3

/// Online mean/variance accumulator.
struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &xi) in x.iter().enumerate() {
            let d = xi - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (xi - self.mean[i]);
        }
    }

    /// Variance shrunk toward a small diagonal, as in Stan's windowed adaptation.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.m2
            .iter()
            .map(|m2| {
                let var = m2 / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::diagnostics::{ess, rhat};
    use crate::inference::params::{Constraint, ParameterSpace};
    use rand::RngCore;
    use rand_distr::StandardNormal;

    /// Standard normal in `dim` dimensions, optionally correlated in 2D.
    struct Gaussian {
        space: ParameterSpace,
        rho: f64,
    }

    impl Gaussian {
        fn new(dim: usize, rho: f64) -> Self {
            let space = ParameterSpace::builder()
                .vector("x", dim, Constraint::Unbounded)
                .build()
                .unwrap();
            Self { space, rho }
        }
    }

    impl LogDensityModel for Gaussian {
        fn space(&self) -> &ParameterSpace {
            &self.space
        }

        fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
            if self.rho == 0.0 {
                let lp = -0.5 * position.iter().map(|x| x * x).sum::<f64>();
                let grad = position.iter().map(|x| -x).collect();
                (lp, grad)
            } else {
                // Bivariate normal, unit variances, correlation rho.
                let (x, y) = (position[0], position[1]);
                let det = 1.0 - self.rho * self.rho;
                let lp = -(x * x - 2.0 * self.rho * x * y + y * y) / (2.0 * det);
                let gx = -(x - self.rho * y) / det;
                let gy = -(y - self.rho * x) / det;
                (lp, vec![gx, gy])
            }
        }

        fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
            (0..self.space.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        }
    }

    /// Constant density with zero gradient.
    struct Flat {
        space: ParameterSpace,
    }

    impl LogDensityModel for Flat {
        fn space(&self) -> &ParameterSpace {
            &self.space
        }

        fn log_density_gradient(&self, _position: &[f64]) -> (f64, Vec<f64>) {
            (0.0, vec![0.0])
        }

        fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
            vec![rng.sample::<f64, _>(StandardNormal)]
        }
    }

    /// Normal prior + normal likelihood with known posterior.
    struct Conjugate {
        space: ParameterSpace,
        prior_mean: f64,
        prior_sd: f64,
        obs: Vec<f64>,
        obs_sd: f64,
    }

    impl Conjugate {
        fn posterior(&self) -> (f64, f64) {
            let prec0 = 1.0 / (self.prior_sd * self.prior_sd);
            let precl = self.obs.len() as f64 / (self.obs_sd * self.obs_sd);
            let prec = prec0 + precl;
            let mean = (self.prior_mean * prec0
                + self.obs.iter().sum::<f64>() / (self.obs_sd * self.obs_sd))
                / prec;
            (mean, (1.0 / prec).sqrt())
        }
    }

    impl LogDensityModel for Conjugate {
        fn space(&self) -> &ParameterSpace {
            &self.space
        }

        fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
            let theta = position[0];
            let mut lp = -0.5 * ((theta - self.prior_mean) / self.prior_sd).powi(2);
            let mut grad = -(theta - self.prior_mean) / (self.prior_sd * self.prior_sd);
            for &y in &self.obs {
                lp += -0.5 * ((y - theta) / self.obs_sd).powi(2);
                grad += (y - theta) / (self.obs_sd * self.obs_sd);
            }
            (lp, vec![grad])
        }

        fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
            vec![self.prior_mean + self.prior_sd * rng.sample::<f64, _>(StandardNormal)]
        }
    }

    fn quick_cfg(seed: u64) -> SamplerConfig {
        SamplerConfig { chains: 4, warmup: 500, draws: 500, seed, ..SamplerConfig::default() }
    }

    #[test]
    fn standard_normal_recovered() {
        let model = Gaussian::new(1, 0.0);
        let d = sample(&model, &quick_cfg(3)).unwrap();
        let mean = d.mean("x").unwrap();
        let sd = d.sd("x").unwrap();
        let e = ess(&d, "x").unwrap();
        let mcse = sd / e.sqrt();
        assert!(mean.abs() < 3.0 * mcse, "mean {mean}, MCSE {mcse}");
        assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
        assert!(rhat(&d, "x").unwrap() < 1.01);
    }

    #[test]
    fn flat_target_wanders_without_divergence() {
        let model = Flat {
            space: ParameterSpace::builder().scalar("x", Constraint::Unbounded).build().unwrap(),
        };
        let d = sample(&model, &quick_cfg(4)).unwrap();
        assert_eq!(d.meta().total_divergences(), 0);
        let draws = d.quantity_draws("x").unwrap();
        assert!(draws.iter().all(|v| v.is_finite()));
        let sd = d.sd("x").unwrap();
        assert!(sd > 1.0, "flat target should wander, sd = {sd}");
    }

    #[test]
    fn correlated_gaussian_correlation_recovered() {
        let model = Gaussian::new(2, 0.9);
        let cfg = SamplerConfig { chains: 4, warmup: 1000, draws: 1000, seed: 5, ..Default::default() };
        let d = sample(&model, &cfg).unwrap();
        let xs = d.quantity_draws("x[1]").unwrap();
        let ys = d.quantity_draws("x[2]").unwrap();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!((corr - 0.9).abs() < 0.05, "posterior correlation {corr}");
    }

    #[test]
    fn conjugate_posterior_recovered() {
        let model = Conjugate {
            space: ParameterSpace::builder().scalar("theta", Constraint::Unbounded).build().unwrap(),
            prior_mean: 0.5,
            prior_sd: 2.0,
            obs: vec![1.2, 0.8, 1.5, 0.9, 1.1, 1.3],
            obs_sd: 1.0,
        };
        let (post_mean, post_sd) = model.posterior();
        let d = sample(&model, &SamplerConfig { seed: 6, ..Default::default() }).unwrap();
        let mean = d.mean("theta").unwrap();
        let sd = d.sd("theta").unwrap();
        let mcse = sd / ess(&d, "theta").unwrap().sqrt();
        assert!((mean - post_mean).abs() < 3.0 * mcse, "mean {mean} vs {post_mean} (MCSE {mcse})");
        assert!((sd - post_sd).abs() < 0.05 * post_sd, "sd {sd} vs {post_sd}");
        assert!(rhat(&d, "theta").unwrap() < 1.01);
    }

    #[test]
    fn deterministic_given_seed() {
        let model = Gaussian::new(2, 0.5);
        let cfg = quick_cfg(9);
        let a = sample(&model, &cfg).unwrap();
        let b = sample(&model, &cfg).unwrap();
        assert_eq!(a, b);
        let c = sample(&model, &quick_cfg(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn constraints_preserved_in_draws() {
        struct Constrained {
            space: ParameterSpace,
        }
        impl LogDensityModel for Constrained {
            fn space(&self) -> &ParameterSpace {
                &self.space
            }
            fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
                // Standard normal priors on all unconstrained coordinates.
                let lp = -0.5 * position.iter().map(|x| x * x).sum::<f64>();
                (lp, position.iter().map(|x| -x).collect())
            }
            fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
                (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            }
        }
        let model = Constrained {
            space: ParameterSpace::builder()
                .scalar("sigma", Constraint::Positive)
                .scalar("beta", Constraint::UnitInterval)
                .scalar("omega", Constraint::LowerBoundedAtOne)
                .build()
                .unwrap(),
        };
        let d = sample(&model, &quick_cfg(11)).unwrap();
        for s in 0..d.total_draws() {
            let row = d.draw_flat(s);
            assert!(row[0] > 0.0);
            assert!(row[1] > 0.0 && row[1] < 1.0);
            assert!(row[2] >= 1.0);
        }
    }

    #[test]
    fn init_failure_reported() {
        struct Broken {
            space: ParameterSpace,
        }
        impl LogDensityModel for Broken {
            fn space(&self) -> &ParameterSpace {
                &self.space
            }
            fn log_density_gradient(&self, _: &[f64]) -> (f64, Vec<f64>) {
                (f64::NAN, vec![f64::NAN])
            }
            fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
                vec![rng.sample::<f64, _>(StandardNormal)]
            }
        }
        let model = Broken {
            space: ParameterSpace::builder().scalar("x", Constraint::Unbounded).build().unwrap(),
        };
        assert!(sample(&model, &quick_cfg(12)).is_err());
    }
}

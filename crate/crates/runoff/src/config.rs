//! Run configuration: one JSON file drives every command, with CLI flags
//! overriding individual keys. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dev::DevConfig;
use crate::error::{Error, Result};
use crate::forecast::ForecastKind;
use crate::inference::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Long-CSV triangle corpus.
    pub input: PathBuf,
    /// Every command writes its outputs and manifest here.
    pub output_dir: PathBuf,
    /// Per-line development windows; lines not listed get defaults derived
    /// from the triangle size.
    #[serde(default)]
    pub lines: BTreeMap<String, LineSettings>,
    #[serde(default)]
    pub sampler: SamplerSettings,
    /// Prior scale multiplier (0.5 = informative, 2.0 = diffuse sensitivity runs).
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub models: ModelFlags,
    /// Empirical measurement-error prior: derived from the corpus unless set.
    #[serde(default)]
    pub me_prior: MePrior,
    #[serde(default)]
    pub seed: u64,
    /// Forecast horizon in accident years.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Premiums for future accident years; defaults to each triangle's last
    /// observed premium (with a warning).
    #[serde(default)]
    pub future_premiums: Option<Vec<f64>>,
    /// Development simulation horizon; defaults to 4 * M.
    #[serde(default)]
    pub j_max: Option<usize>,
    #[serde(default)]
    pub sbc: SbcSettings,
    /// Quantiles for cashflow summaries.
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
}

fn default_kappa() -> f64 {
    1.0
}

fn default_horizon() -> usize {
    3
}

fn default_quantiles() -> Vec<f64> {
    vec![0.05, 0.25, 0.5, 0.75, 0.95]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSettings {
    pub tau: usize,
    pub rho: (usize, usize),
}

impl LineSettings {
    pub fn dev_config(&self, m: usize, kappa: f64, j_max: Option<usize>) -> DevConfig {
        DevConfig { tau: self.tau, rho: self.rho, j_max: j_max.unwrap_or(4 * m), kappa }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_leapfrog: usize,
    pub path_length: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let base = SamplerConfig::default();
        Self {
            chains: base.chains,
            warmup: base.warmup,
            draws: base.draws,
            target_accept: base.target_accept,
            max_leapfrog: base.max_leapfrog,
            path_length: base.path_length,
        }
    }
}

impl SamplerSettings {
    pub fn to_config(self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            warmup: self.warmup,
            draws: self.draws,
            target_accept: self.target_accept,
            max_leapfrog: self.max_leapfrog,
            path_length: self.path_length,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFlags {
    pub rw: bool,
    pub mr: bool,
    pub stack: bool,
}

impl Default for ModelFlags {
    fn default() -> Self {
        Self { rw: true, mr: true, stack: true }
    }
}

impl ModelFlags {
    pub fn kinds(&self) -> Vec<ForecastKind> {
        let mut out = Vec::new();
        if self.rw {
            out.push(ForecastKind::RandomWalk);
        }
        if self.mr {
            out.push(ForecastKind::MeanReversion);
        }
        out
    }
}

/// Source of `(E[r], SD[r])` for the latent-ratio prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum MePrior {
    #[default]
    Auto,
    Explicit {
        mean: f64,
        sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbcSettings {
    /// "dev", "rw" or "mr".
    pub family: String,
    pub n_years: usize,
    pub n_sims: usize,
    pub thin_to: usize,
    pub bins: usize,
    /// Likelihood sigma multiplier at fit time (misspecification probes).
    pub fit_sigma_scale: f64,
}

impl Default for SbcSettings {
    fn default() -> Self {
        Self { family: "dev".into(), n_years: 10, n_sims: 200, thin_to: 100, bins: 20, fit_sigma_scale: 1.0 }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(Error::validation("kappa must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::validation("forecast horizon must be >= 1"));
        }
        if self.models.kinds().is_empty() {
            return Err(Error::validation("at least one of the rw/mr model flags must be set"));
        }
        if self.quantiles.is_empty() || self.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::validation("quantiles must be a nonempty list within [0, 1]"));
        }
        self.sampler.to_config(self.seed).validate()?;
        match self.sbc.family.as_str() {
            "dev" | "rw" | "mr" => {}
            other => {
                return Err(Error::validation(format!(
                    "sbc.family must be one of dev/rw/mr, got '{other}'"
                )));
            }
        }
        Ok(())
    }

    /// Per-line development config for a triangle with `m` lags, with the
    /// run's prior scale applied.
    pub fn dev_config_for(&self, line: &str, m: usize) -> Result<DevConfig> {
        let cfg = match self.lines.get(line) {
            Some(ls) => ls.dev_config(m, self.kappa, self.j_max),
            None => {
                let mut d = DevConfig::defaults(m).with_kappa(self.kappa);
                if let Some(j) = self.j_max {
                    d.j_max = j;
                }
                d
            }
        };
        cfg.validate(m)?;
        Ok(cfg)
    }

    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

//! Data-driven priors from hierarchical posteriors.

use crate::error::{Error, Result};
use crate::forecast::hierarchical::HierarchicalModel;
use crate::forecast::state_space::{ForecastPriors, GaussianPrior};
use crate::inference::{rhat, DrawMatrix};

/// Group-level posterior summaries repackaged as single-program priors.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DerivedPriors {
    pub log_eps: GaussianPrior,
    pub eta0: GaussianPrior,
}

impl DerivedPriors {
    /// Merge into a full prior set (the remaining priors keep `base`'s values).
    pub fn apply(&self, base: ForecastPriors) -> ForecastPriors {
        ForecastPriors { log_eps: self.log_eps, eta0: self.eta0, ..base }
    }
}

/// Turn a converged hierarchical fit into priors for the non-hierarchical
/// model: `log eps ~ N(E[eps_mu], E[eps_sigma] * inflation)` and
/// `eta0 ~ N(E[eta_mu0], E[eta_sigma0] * inflation)`. The inflation factor
/// (>= 1) widens the scales when the group held few programs.
///
/// Refuses inputs whose hyperparameters have split-R-hat >= 1.01.
pub fn derive_priors(hier: &DrawMatrix, inflation: f64) -> Result<DerivedPriors> {
    if !inflation.is_finite() || inflation < 1.0 {
        return Err(Error::validation("prior inflation factor must be >= 1"));
    }
    for name in HierarchicalModel::hyper_names() {
        let r = rhat(hier, name)?;
        if r.is_nan() || r >= 1.01 {
            return Err(Error::validation(format!(
                "hierarchical fit not converged: R-hat({name}) = {r:.4}"
            )));
        }
    }
    Ok(DerivedPriors {
        log_eps: GaussianPrior::new(hier.mean("eps_mu")?, hier.mean("eps_sigma")? * inflation),
        eta0: GaussianPrior::new(hier.mean("eta_mu0")?, hier.mean("eta_sigma0")? * inflation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::SamplerMeta;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn hyper_matrix(eps_mu: f64, eps_sigma: f64, offset_chains: f64) -> DrawMatrix {
        let names: Vec<String> =
            ["eps_mu", "eps_sigma", "eta_mu0", "eta_sigma0"].iter().map(|s| s.to_string()).collect();
        let chains = 4;
        let iters = 200;
        let mut rng = crate::seed::stream_rng(17, 0);
        let mut values = Vec::new();
        for c in 0..chains {
            for _ in 0..iters {
                let jitter = 1e-6 * rng.sample::<f64, _>(StandardNormal);
                values.push(eps_mu + offset_chains * c as f64 + jitter);
                values.push(eps_sigma + 1e-6 * rng.sample::<f64, _>(StandardNormal));
                values.push(-1.0 + 1e-6 * rng.sample::<f64, _>(StandardNormal));
                values.push(0.2 + 1e-6 * rng.sample::<f64, _>(StandardNormal));
            }
        }
        let meta = SamplerMeta {
            seed: 0,
            divergences: vec![0; chains],
            step_sizes: vec![0.1; chains],
            accept_rates: vec![0.9; chains],
        };
        DrawMatrix::from_parts(names, chains, iters, values, meta).unwrap()
    }

    #[test]
    fn plug_in_definition() {
        let d = hyper_matrix(-2.0, 0.3, 0.0);
        let p = derive_priors(&d, 1.0).unwrap();
        assert!((p.log_eps.location - (-2.0)).abs() < 1e-4);
        assert!((p.log_eps.scale - 0.3).abs() < 1e-4);
    }

    #[test]
    fn inflation_scales_sd() {
        let d = hyper_matrix(-2.0, 0.3, 0.0);
        let p = derive_priors(&d, 1.5).unwrap();
        assert!((p.log_eps.scale - 0.45).abs() < 1e-4);
    }

    #[test]
    fn non_converged_refused() {
        let d = hyper_matrix(-2.0, 0.3, 5.0);
        assert!(derive_priors(&d, 1.0).is_err());
    }
}

//! Lognormal moment matching.

use crate::error::{Error, Result};

/// Parameters `(mu, sigma)` of the lognormal distribution with exactly the
/// given mean and standard deviation:
/// `mu = log(mean^2 / sqrt(mean^2 + sd^2))`, `sigma = sqrt(log(1 + sd^2/mean^2))`.
pub fn lognormal_moment_match(mean: f64, sd: f64) -> Result<(f64, f64)> {
    if !mean.is_finite() || mean <= 0.0 {
        return Err(Error::validation(format!("moment match needs mean > 0, got {mean}")));
    }
    if !sd.is_finite() || sd < 0.0 {
        return Err(Error::validation(format!("moment match needs sd >= 0, got {sd}")));
    }
    let ratio2 = (sd / mean) * (sd / mean);
    let mu = (mean * mean / (mean * mean + sd * sd).sqrt()).ln();
    let sigma = ratio2.ln_1p().sqrt();
    Ok((mu, sigma))
}

//! Shared density and summary helpers.

pub const LN_2PI: f64 = 1.8378770664093453;

/// Log density of `Normal(mean, sd)` at `x`.
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Log density of `Lognormal(mu, sigma)` at `y > 0`.
pub fn lognormal_logpdf(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y.ln() - mu) / sigma;
    -y.ln() - sigma.ln() - 0.5 * LN_2PI - 0.5 * z * z
}

/// `log(sum(exp(xs)))` with the max factored out. Empty input yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Quantile with linear interpolation between order statistics
/// (the midpoint convention for even counts at the median).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Sample mean and standard deviation (ddof = 1; sd = 0 for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

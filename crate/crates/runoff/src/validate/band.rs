//! Exact binomial uncertainty bands for rank and percentile histograms.

use crate::error::{Error, Result};

/// Central `level` interval for one bin count of a histogram of `n` uniform
/// draws over `bins` bins: the exact Binomial(n, 1/bins) quantiles at
/// `(1 - level)/2` and `1 - (1 - level)/2`.
pub fn uniform_band(n: usize, bins: usize, level: f64) -> Result<(u64, u64)> {
    if bins < 2 {
        return Err(Error::validation("need at least 2 histogram bins"));
    }
    if n < bins {
        return Err(Error::validation(format!("need at least {bins} draws, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation("band level must be in (0, 1)"));
    }
    let p = 1.0 / bins as f64;
    let tail = (1.0 - level) / 2.0;
    Ok((binomial_quantile(n as u64, p, tail), binomial_quantile(n as u64, p, 1.0 - tail)))
}

/// Smallest `k` with `P(X <= k) >= q` for `X ~ Binomial(n, p)`.
fn binomial_quantile(n: u64, p: f64, q: f64) -> u64 {
    let mut cdf = 0.0;
    for k in 0..=n {
        cdf += ln_binomial_pmf(n, k, p).exp();
        if cdf >= q {
            return k;
        }
    }
    n
}

fn ln_binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// Lanczos approximation (g = 7, 9 coefficients), accurate to ~1e-13.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Chi-square uniformity statistic of a histogram against equal bin masses.
pub fn chi_square_statistic(histogram: &[u64]) -> f64 {
    let n: u64 = histogram.iter().sum();
    let expected = n as f64 / histogram.len() as f64;
    histogram
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum()
}

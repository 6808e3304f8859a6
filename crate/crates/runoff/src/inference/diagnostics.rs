//! Split-R-hat and effective sample size.

use crate::error::{Error, Result};
use crate::inference::draws::DrawMatrix;

/// Split-chain potential scale reduction factor for one quantity.
///
/// Each chain is split in half (middle draw dropped when odd) and the
/// classic between/within variance ratio is computed over the half-chains.
/// Zero within-chain variance is an error, not 1.0.
pub fn rhat(draws: &DrawMatrix, quantity: &str) -> Result<f64> {
    let chains = split_halves(&preconditions(draws, quantity)?);
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().zip(&means).map(|(c, &m)| sample_var(c, m)).collect();
    let w = mean(&vars);
    if !w.is_finite() || w <= 0.0 {
        return Err(Error::computation(format!(
            "R-hat undefined for '{quantity}': zero within-chain variance"
        )));
    }
    let b = n * sample_var(&means, mean(&means));
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Effective sample size for one quantity.
///
/// Multi-chain autocorrelation estimate with the paired-sum rule: lag sums
/// accumulate until the first non-positive pair.
pub fn ess(draws: &DrawMatrix, quantity: &str) -> Result<f64> {
    let chains = preconditions(draws, quantity)?;
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| sample_var(c, mu)).collect();
    let w = mean(&vars);
    if !w.is_finite() || w <= 0.0 {
        return Err(Error::computation(format!(
            "ESS undefined for '{quantity}': zero within-chain variance"
        )));
    }
    let b = nf * sample_var(&means, mean(&means));
    let var_plus = (nf - 1.0) / nf * w + b / nf;

    // Mean over chains of the biased autocovariance at lag t.
    let acov = |t: usize| -> f64 {
        let mut total = 0.0;
        for (c, &mu) in chains.iter().zip(&means) {
            let mut s = 0.0;
            for k in 0..n - t {
                s += (c[k] - mu) * (c[k + t] - mu);
            }
            total += s / nf;
        }
        total / m
    };
    let rho = |t: usize| 1.0 - (w - acov(t)) / var_plus;

    // tau = -1 + 2 * sum of positive paired sums, with rho(0) fixed at 1.
    let mut tau = -1.0;
    let mut pair = 1.0 + rho(1);
    let mut t = 0usize;
    while pair > 0.0 {
        tau += 2.0 * pair;
        t += 2;
        if t + 1 >= n {
            break;
        }
        pair = rho(t) + rho(t + 1);
    }
    Ok((m * nf / tau).min(m * nf * 2.0))
}

fn preconditions(draws: &DrawMatrix, quantity: &str) -> Result<Vec<Vec<f64>>> {
    if draws.chains() < 2 {
        return Err(Error::validation("diagnostics need at least 2 chains"));
    }
    if draws.iters_per_chain() < 4 {
        return Err(Error::validation("diagnostics need at least 4 draws per chain"));
    }
    draws.quantity_chains(quantity)
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let half = chains[0].len() / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64], mu: f64) -> f64 {
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (xs.len() - 1) as f64
}

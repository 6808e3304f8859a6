//! MLE stacking of predictive distributions.
//!
//! Finds simplex weights maximizing the stacked log score
//! `sum_g log sum_k w_k exp(LPD_gk)` with multiplicative (EM-style) updates,
//! which are monotone in the objective because the problem is concave over
//! the simplex.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::seed::stream_rng;

/// Per-datapoint, per-model log predictive densities on the test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackInput {
    pub model_names: Vec<String>,
    pub datapoint_ids: Vec<String>,
    /// `lpd[g][k]` for datapoint `g`, model `k`.
    pub lpd: Vec<Vec<f64>>,
    /// Datapoints where every model underflowed, dropped before fitting.
    pub dropped: Vec<String>,
}

impl StackInput {
    /// Validate and assemble, dropping rows where all models report `-inf`.
    pub fn new(model_names: Vec<String>, datapoint_ids: Vec<String>, lpd: Vec<Vec<f64>>) -> Result<Self> {
        if model_names.len() < 2 {
            return Err(Error::validation("stacking needs at least 2 models"));
        }
        if lpd.len() != datapoint_ids.len() {
            return Err(Error::validation("one LPD row per datapoint required"));
        }
        let mut kept_ids = Vec::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (id, row) in datapoint_ids.into_iter().zip(lpd) {
            if row.len() != model_names.len() {
                return Err(Error::validation(format!(
                    "datapoint {id}: {} LPD values for {} models",
                    row.len(),
                    model_names.len()
                )));
            }
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::validation(format!("datapoint {id}: non-finite LPD")));
            }
            if row.iter().all(|v| *v == f64::NEG_INFINITY) {
                dropped.push(id);
            } else {
                kept_ids.push(id);
                kept.push(row);
            }
        }
        if kept.is_empty() {
            return Err(Error::validation("no datapoints with finite LPD under any model"));
        }
        Ok(Self { model_names, datapoint_ids: kept_ids, lpd: kept, dropped })
    }

    pub fn n_datapoints(&self) -> usize {
        self.lpd.len()
    }

    pub fn n_models(&self) -> usize {
        self.model_names.len()
    }
}

/// Simplex weights, one per model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackWeights {
    pub model_names: Vec<String>,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StackWeights {
    pub fn weight_of(&self, model: &str) -> Option<f64> {
        self.model_names.iter().position(|m| m == model).map(|k| self.weights[k])
    }

    /// `{model: weight}` JSON.
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let map: serde_json::Map<String, serde_json::Value> = self
            .model_names
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| (m.clone(), serde_json::json!(w)))
            .collect();
        std::fs::write(path.as_ref(), serde_json::to_string_pretty(&map)?)?;
        Ok(())
    }
}

/// Stacked log score of `weights` on `input`.
pub fn stack_objective(input: &StackInput, weights: &[f64]) -> f64 {
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    input
        .lpd
        .iter()
        .map(|row| {
            let terms: Vec<f64> =
                row.iter().zip(&log_w).map(|(lpd, lw)| lpd + lw).collect();
            log_sum_exp(&terms)
        })
        .sum()
}

/// Maximize the stacked log score over the simplex from the uniform start.
///
/// Each iteration sets `w_k` to the mean over datapoints of the posterior
/// model responsibility `w_k p_gk / sum_j w_j p_gj`; iteration stops when the
/// objective gain drops below `tol`. Weights below 1e-8 after convergence are
/// snapped to zero (ties keep the uniform split they started from).
pub fn fit_stack(input: &StackInput, tol: f64, max_iter: usize) -> Result<StackWeights> {
    let k = input.n_models();
    let g = input.n_datapoints() as f64;
    let mut weights = vec![1.0 / k as f64; k];
    let mut objective = stack_objective(input, &weights);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let mut next = vec![0.0; k];
        for row in &input.lpd {
            let terms: Vec<f64> = row.iter().zip(&log_w).map(|(lpd, lw)| lpd + lw).collect();
            let denom = log_sum_exp(&terms);
            for (j, t) in terms.iter().enumerate() {
                if t.is_finite() {
                    next[j] += (t - denom).exp();
                }
            }
        }
        for w in next.iter_mut() {
            *w /= g;
        }
        let new_objective = stack_objective(input, &next);
        // Multiplicative updates are monotone; guard against stalls anyway.
        if new_objective >= objective {
            weights = next;
        }
        let gain = new_objective - objective;
        objective = objective.max(new_objective);
        if gain.abs() < tol {
            converged = true;
            break;
        }
    }
    // Snap vanishing weights and renormalize.
    let mut snapped: Vec<f64> = weights.iter().map(|&w| if w < 1e-8 { 0.0 } else { w }).collect();
    let total: f64 = snapped.iter().sum();
    for w in snapped.iter_mut() {
        *w /= total;
    }
    let objective = stack_objective(input, &snapped);
    Ok(StackWeights {
        model_names: input.model_names.clone(),
        weights: snapped,
        objective,
        iterations,
        converged,
    })
}

/// Mixture draws: each blended draw picks model `k` with probability `w_k`,
/// then resamples uniformly from that model's draws.
pub fn blend(
    weights: &StackWeights,
    per_model_draws: &[Vec<f64>],
    n_out: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if per_model_draws.len() != weights.weights.len() {
        return Err(Error::validation(format!(
            "{} draw sets for {} weights",
            per_model_draws.len(),
            weights.weights.len()
        )));
    }
    if per_model_draws.iter().any(|d| d.is_empty()) {
        return Err(Error::validation("every model needs at least one draw"));
    }
    let mut cumulative = Vec::with_capacity(weights.weights.len());
    let mut acc = 0.0;
    for w in &weights.weights {
        acc += w;
        cumulative.push(acc);
    }
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n_out);
    for _ in 0..n_out {
        let u: f64 = rng.random();
        let k = cumulative.iter().position(|&c| u <= c).unwrap_or(weights.weights.len() - 1);
        let draws = &per_model_draws[k];
        let idx = rng.random_range(0..draws.len());
        out.push(draws[idx]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(names: &[&str], lpd: Vec<Vec<f64>>) -> StackInput {
        let ids = (0..lpd.len()).map(|g| format!("g{g}")).collect();
        StackInput::new(names.iter().map(|s| s.to_string()).collect(), ids, lpd).unwrap()
    }

    #[test]
    fn pointwise_dominance_takes_all() {
        // Model A density = 2x model B everywhere.
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|g| {
                let pb = 0.1 + 0.1 * g as f64;
                vec![(2.0 * pb).ln(), pb.ln()]
            })
            .collect();
        let inp = input(&["a", "b"], rows);
        let w = fit_stack(&inp, 1e-10, 10_000).unwrap();
        assert_eq!(w.weights, vec![1.0, 0.0]);
    }

    #[test]
    fn identical_models_split_evenly() {
        let rows = vec![vec![-1.2, -1.2], vec![-0.4, -0.4], vec![-2.0, -2.0]];
        let inp = input(&["a", "b"], rows);
        let w = fit_stack(&inp, 1e-10, 10_000).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-12);
        assert!((w.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_point_stationary_weight() {
        // Densities p_a = (0.9, 0.1), p_b = (0.3, 0.6): the stationary point
        // of d/dw [log(0.3 + 0.6 w) + log(0.6 - 0.5 w)] is w_a = 0.35.
        let rows = vec![vec![0.9f64.ln(), 0.3f64.ln()], vec![0.1f64.ln(), 0.6f64.ln()]];
        let inp = input(&["a", "b"], rows);
        let w = fit_stack(&inp, 1e-12, 100_000).unwrap();
        assert!((w.weight_of("a").unwrap() - 0.35).abs() < 1e-4, "{:?}", w.weights);

        // Grid-search oracle.
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..=100_000 {
            let wa = k as f64 / 100_000.0;
            let obj = stack_objective(&inp, &[wa, 1.0 - wa]);
            if obj > best.0 {
                best = (obj, wa);
            }
        }
        assert!((best.1 - 0.35).abs() < 1e-4, "grid oracle found {}", best.1);
        assert!((w.weight_of("a").unwrap() - best.1).abs() < 1e-4);
    }

    #[test]
    fn objective_monotone_and_beats_vertices() {
        let rows = vec![
            vec![-0.5, -1.5, -0.8],
            vec![-2.0, -0.2, -1.0],
            vec![-1.0, -1.0, -0.1],
            vec![-0.3, -0.9, -2.0],
        ];
        let inp = input(&["a", "b", "c"], rows);
        // Track the objective across manual iterations of the update.
        let k = inp.n_models();
        let mut weights = vec![1.0 / k as f64; k];
        let mut last = stack_objective(&inp, &weights);
        for _ in 0..200 {
            let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
            let mut next = vec![0.0; k];
            for row in &inp.lpd {
                let terms: Vec<f64> = row.iter().zip(&log_w).map(|(l, lw)| l + lw).collect();
                let denom = log_sum_exp(&terms);
                for (j, t) in terms.iter().enumerate() {
                    next[j] += (t - denom).exp();
                }
            }
            for w in next.iter_mut() {
                *w /= inp.n_datapoints() as f64;
            }
            let obj = stack_objective(&inp, &next);
            assert!(obj >= last - 1e-12, "objective decreased: {last} -> {obj}");
            last = obj;
            weights = next;
        }
        let fitted = fit_stack(&inp, 1e-10, 10_000).unwrap();
        for vertex in 0..k {
            let mut w = vec![0.0; k];
            w[vertex] = 1.0;
            assert!(fitted.objective >= stack_objective(&inp, &w) - 1e-9);
        }
        let uniform = vec![1.0 / k as f64; k];
        assert!(fitted.objective >= stack_objective(&inp, &uniform) - 1e-9);
    }

    #[test]
    fn permutation_permutes_weights() {
        let rows = vec![vec![-0.5, -1.5], vec![-2.0, -0.2], vec![-1.0, -0.6]];
        let swapped: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[1], r[0]]).collect();
        let w1 = fit_stack(&input(&["a", "b"], rows), 1e-10, 10_000).unwrap();
        let w2 = fit_stack(&input(&["b", "a"], swapped), 1e-10, 10_000).unwrap();
        assert!((w1.weights[0] - w2.weights[1]).abs() < 1e-10);
        assert!((w1.weights[1] - w2.weights[0]).abs() < 1e-10);
    }

    #[test]
    fn duplicated_model_preserves_blend_density() {
        let rows = vec![vec![-0.5, -1.5], vec![-2.0, -0.2], vec![-1.0, -0.6]];
        let two = fit_stack(&input(&["a", "b"], rows.clone()), 1e-12, 100_000).unwrap();
        let dup_rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1], r[1]]).collect();
        let three = fit_stack(&input(&["a", "b", "b2"], dup_rows.clone()), 1e-12, 100_000).unwrap();
        // Blended density per point must match within tolerance.
        let inp3 = input(&["a", "b", "b2"], dup_rows);
        for (g, row) in inp3.lpd.iter().enumerate() {
            let d2 = (two.weights[0] * rows[g][0].exp()) + (two.weights[1] * rows[g][1].exp());
            let d3: f64 = three.weights.iter().zip(row).map(|(w, l)| w * l.exp()).sum();
            assert!((d2 - d3).abs() < 1e-6, "point {g}: {d2} vs {d3}");
        }
    }

    #[test]
    fn all_underflow_rows_dropped() {
        let inp = StackInput::new(
            vec!["a".into(), "b".into()],
            vec!["g0".into(), "g1".into()],
            vec![vec![f64::NEG_INFINITY, f64::NEG_INFINITY], vec![-1.0, -2.0]],
        )
        .unwrap();
        assert_eq!(inp.n_datapoints(), 1);
        assert_eq!(inp.dropped, vec!["g0".to_string()]);
    }

    #[test]
    fn partial_underflow_is_zero_density() {
        let rows = vec![vec![-1.0, f64::NEG_INFINITY], vec![-1.0, -0.5]];
        let inp = input(&["a", "b"], rows);
        let w = fit_stack(&inp, 1e-10, 10_000).unwrap();
        assert!(w.weights.iter().all(|v| v.is_finite()));
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blend_respects_weights() {
        let w = StackWeights {
            model_names: vec!["a".into(), "b".into()],
            weights: vec![1.0, 0.0],
            objective: 0.0,
            iterations: 1,
            converged: true,
        };
        let draws_a = vec![1.0, 2.0, 3.0];
        let draws_b = vec![100.0, 200.0];
        let blended = blend(&w, &[draws_a.clone(), draws_b], 500, 5).unwrap();
        assert!(blended.iter().all(|v| draws_a.contains(v)));

        let w = StackWeights {
            model_names: vec!["a".into(), "b".into()],
            weights: vec![0.5, 0.5],
            objective: 0.0,
            iterations: 1,
            converged: true,
        };
        let blended = blend(&w, &[vec![0.0], vec![1.0]], 40_000, 6).unwrap();
        let mean = blended.iter().sum::<f64>() / blended.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mixture mean {mean}");
    }
}

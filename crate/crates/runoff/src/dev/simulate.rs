//! Forward simulation from the left edge of the triangle to ultimate losses.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dev::{dev_sigma, DevConfig};
use crate::error::{Error, Result};
use crate::inference::DrawMatrix;
use crate::math::mean_sd;
use crate::seed::stream_rng;
use crate::triangle::Triangle;

/// Posterior summary of developed ultimate loss ratios, one entry per
/// accident year, with the draw-level ultimates retained.
#[derive(Debug, Clone, PartialEq)]
pub struct UltimateSummary {
    pub triangle_id: String,
    /// Posterior mean ultimate loss ratio per accident year.
    pub means: Vec<f64>,
    /// Posterior standard deviation per accident year.
    pub sds: Vec<f64>,
    /// `draws[i-1][s]` = ultimate loss ratio for accident year `i`, draw `s`.
    pub draws: Vec<Vec<f64>>,
}

impl UltimateSummary {
    pub fn n_accident_years(&self) -> usize {
        self.means.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    /// Write `(triangle_id, accident_year, mean_ultimate_lr, sd_ultimate_lr)` rows.
    pub fn write_csv(&self, writer: &mut csv::Writer<impl std::io::Write>) -> Result<()> {
        for i in 0..self.means.len() {
            writer.write_record([
                self.triangle_id.as_str(),
                &(i + 1).to_string(),
                &self.means[i].to_string(),
                &self.sds[i].to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn csv_header() -> [&'static str; 4] {
        ["triangle_id", "accident_year", "mean_ultimate_lr", "sd_ultimate_lr"]
    }

    /// Read summaries back from the `(triangle_id, accident_year, mean, sd)`
    /// CSV; draw-level ultimates are not retained in that format.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<UltimateSummary>> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let mut order: Vec<String> = Vec::new();
        let mut acc: std::collections::BTreeMap<String, Vec<(usize, f64, f64)>> =
            std::collections::BTreeMap::new();
        for record in reader.records() {
            let r = record?;
            let bad = || Error::validation(format!("cannot parse ultimate row {r:?}"));
            let id = r[0].to_string();
            let year: usize = r[1].parse().map_err(|_| bad())?;
            let mean: f64 = r[2].parse().map_err(|_| bad())?;
            let sd: f64 = r[3].parse().map_err(|_| bad())?;
            if !acc.contains_key(&id) {
                order.push(id.clone());
            }
            acc.entry(id).or_default().push((year, mean, sd));
        }
        let mut out = Vec::with_capacity(order.len());
        for id in order {
            let mut rows = acc.remove(&id).expect("present");
            rows.sort_by_key(|(year, _, _)| *year);
            out.push(UltimateSummary {
                triangle_id: id,
                means: rows.iter().map(|(_, m, _)| *m).collect(),
                sds: rows.iter().map(|(_, _, s)| *s).collect(),
                draws: Vec::new(),
            });
        }
        Ok(out)
    }

    /// Write draw-level ultimates: `(triangle_id, accident_year, draw, ultimate_lr)`.
    pub fn write_draws_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record(["triangle_id", "accident_year", "draw", "ultimate_lr"])?;
        for (i, row) in self.draws.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                writer.write_record([
                    self.triangle_id.as_str(),
                    &(i + 1).to_string(),
                    &s.to_string(),
                    &v.to_string(),
                ])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

/// Per-draw development parameters extracted once from the draw matrices.
struct DevDraw {
    log_alpha: Vec<f64>,
    gamma1: f64,
    gamma2: f64,
    log_omega: f64,
    beta: f64,
    lambda1: f64,
    lambda2: f64,
}

/// Simulate each accident year forward from its first observed cell and
/// summarize the ultimate loss ratio at `cfg.j_max`.
///
/// Observed cells are kept at their observed values; only unobserved cells
/// are simulated. Chain-ladder draws drive lags `j <= tau`, Bondy draws all
/// later lags, regardless of the tail training window. Body and tail draws
/// are paired by draw index.
pub fn simulate_development(
    body: &DrawMatrix,
    tail: &DrawMatrix,
    triangle: &Triangle,
    cfg: &DevConfig,
    seed: u64,
) -> Result<UltimateSummary> {
    cfg.validate(triangle.n_dev_lags())?;
    let s_body = body.total_draws();
    if s_body != tail.total_draws() {
        return Err(Error::validation(format!(
            "body has {s_body} draws but tail has {}; draws must pair by index",
            tail.total_draws()
        )));
    }
    let m = triangle.n_dev_lags();
    let ratios = triangle.loss_ratios().values;
    let n = ratios.len();

    let draws = extract_draws(body, tail, m)?;

    // draw-major simulation, one RNG stream per draw
    let per_draw: Vec<Result<Vec<f64>>> = (0..s_body)
        .into_par_iter()
        .map(|s| {
            let d = &draws[s];
            let mut rng = stream_rng(seed, s as u64);
            let mut ults = Vec::with_capacity(n);
            for row in &ratios {
                let mut value = row[0];
                for j in 2..=cfg.j_max {
                    if j <= row.len() {
                        value = row[j - 1];
                        continue;
                    }
                    let (mu, sigma) = if j <= cfg.tau {
                        (
                            d.log_alpha[j - 2] + value.ln(),
                            dev_sigma(d.gamma1, d.gamma2, j, value),
                        )
                    } else {
                        (
                            d.log_omega * d.beta.powi(j as i32) + value.ln(),
                            dev_sigma(d.lambda1, d.lambda2, j, value),
                        )
                    };
                    let z: f64 = rng.sample(StandardNormal);
                    value = (mu + sigma * z).exp();
                    if !value.is_finite() || value <= 0.0 {
                        return Err(Error::computation(format!(
                            "non-finite simulated loss at draw {s}, lag {j}"
                        )));
                    }
                }
                ults.push(value);
            }
            Ok(ults)
        })
        .collect();

    let mut by_year: Vec<Vec<f64>> = vec![Vec::with_capacity(s_body); n];
    for row in per_draw {
        for (i, v) in row?.into_iter().enumerate() {
            by_year[i].push(v);
        }
    }
    let mut means = Vec::with_capacity(n);
    let mut sds = Vec::with_capacity(n);
    for ys in &by_year {
        let (mean, sd) = mean_sd(ys);
        means.push(mean);
        sds.push(sd);
    }
    Ok(UltimateSummary { triangle_id: triangle.id().to_string(), means, sds, draws: by_year })
}

fn extract_draws(body: &DrawMatrix, tail: &DrawMatrix, m: usize) -> Result<Vec<DevDraw>> {
    let alpha_idx: Vec<usize> = (1..m)
        .map(|k| body.index_of(&format!("log_alpha[{k}]")))
        .collect::<Result<_>>()?;
    let g1 = body.index_of("gamma1")?;
    let g2 = body.index_of("gamma2")?;
    let omega = tail.index_of("omega")?;
    let beta = tail.index_of("beta")?;
    let l1 = tail.index_of("lambda1")?;
    let l2 = tail.index_of("lambda2")?;
    Ok((0..body.total_draws())
        .map(|s| {
            let b = body.draw_flat(s);
            let t = tail.draw_flat(s);
            DevDraw {
                log_alpha: alpha_idx.iter().map(|&q| b[q]).collect(),
                gamma1: b[g1],
                gamma2: b[g2],
                log_omega: t[omega].ln(),
                beta: t[beta],
                lambda1: t[l1],
                lambda2: t[l2],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::SamplerMeta;

    fn meta(chains: usize) -> SamplerMeta {
        SamplerMeta {
            seed: 0,
            divergences: vec![0; chains],
            step_sizes: vec![0.1; chains],
            accept_rates: vec![0.9; chains],
        }
    }

    fn body_matrix(m: usize, reps: usize, log_alpha: f64, gamma1: f64) -> DrawMatrix {
        let mut names: Vec<String> = (1..m).map(|k| format!("log_alpha[{k}]")).collect();
        names.push("gamma1".into());
        names.push("gamma2".into());
        let mut row: Vec<f64> = vec![log_alpha; m - 1];
        row.push(gamma1);
        row.push(-1.0);
        let values: Vec<f64> = row.iter().copied().cycle().take(reps * (m + 1)).collect();
        DrawMatrix::from_parts(names, 1, reps, values, meta(1)).unwrap()
    }

    fn tail_matrix(reps: usize, omega: f64, beta: f64, lambda1: f64) -> DrawMatrix {
        let names = vec!["omega".into(), "beta".into(), "lambda1".into(), "lambda2".into()];
        let row = [omega, beta, lambda1, -1.0];
        let values: Vec<f64> = row.iter().copied().cycle().take(reps * 4).collect();
        DrawMatrix::from_parts(names, 1, reps, values, meta(1)).unwrap()
    }

    fn runoff_triangle(n: usize) -> Triangle {
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n - i).map(|j| 100.0 + 10.0 * j as f64).collect()).collect();
        Triangle::new("T1", "CA", rows, vec![500.0; n], (1..=n as i64).collect()).unwrap()
    }

    #[test]
    fn identity_draws_propagate_first_column() {
        // Constant rows, alpha = 1 everywhere, sigma -> 0: the ultimate is
        // y_i1 for every accident year.
        let t = Triangle::new(
            "T1",
            "CA",
            vec![vec![100.0, 100.0, 100.0], vec![80.0, 80.0], vec![60.0]],
            vec![100.0; 3],
            vec![1, 2, 3],
        )
        .unwrap();
        let body = body_matrix(3, 4, 0.0, -40.0);
        let tail = tail_matrix(4, 1.0, 0.5, -40.0);
        let cfg = DevConfig { tau: 2, rho: (2, 3), j_max: 12, kappa: 1.0 };
        let got = simulate_development(&body, &tail, &t, &cfg, 9).unwrap();
        for (i, mean) in got.means.iter().enumerate() {
            let expect = t.cell(i + 1, 1).unwrap() / t.premium(i + 1);
            assert!((mean - expect).abs() < 1e-9, "year {}: {mean} vs {expect}", i + 1);
            assert!(got.sds[i] < 1e-6);
        }
    }

    #[test]
    fn deterministic_doubling() {
        // Single draw with alpha_1 = 2, sigma -> 0 and tail omega = 1: an
        // accident year observed only at lag 1 doubles into lag 2 and the
        // tail holds it flat, so the ultimate is 2 * y_i1.
        let t = Triangle::new(
            "T1",
            "CA",
            vec![vec![100.0, 200.0, 200.0], vec![70.0, 140.0], vec![50.0]],
            vec![100.0; 3],
            vec![1, 2, 3],
        )
        .unwrap();
        let body = body_matrix(3, 1, 2f64.ln(), -40.0);
        let tail = tail_matrix(1, 1.0, 0.5, -40.0);
        let cfg = DevConfig { tau: 2, rho: (2, 3), j_max: 8, kappa: 1.0 };
        let got = simulate_development(&body, &tail, &t, &cfg, 9).unwrap();
        assert!((got.means[2] - 2.0 * 50.0 / 100.0).abs() < 1e-9, "{}", got.means[2]);
        assert!(got.sds[2] < 1e-6);
    }

    #[test]
    fn draw_count_mismatch_rejected() {
        let t = runoff_triangle(3);
        let body = body_matrix(3, 4, 0.0, -3.0);
        let tail = tail_matrix(5, 1.2, 0.5, -3.0);
        let cfg = DevConfig { tau: 2, rho: (2, 3), j_max: 12, kappa: 1.0 };
        assert!(simulate_development(&body, &tail, &t, &cfg, 1).is_err());
    }

    #[test]
    fn matches_direct_simulation_oracle() {
        // Fixed parameters in both paths; the distribution of the simulated
        // ultimate must match an independently coded forward simulation
        // (two-sample Kolmogorov-Smirnov test at alpha = 0.01).
        let n = 4;
        let t = runoff_triangle(n);
        let reps = 4000;
        let (la, g1, g2) = (0.25, -4.0, -1.0);
        let (omega, beta, l1, l2) = (1.3, 0.6, -4.5, -1.0);
        let body = body_matrix(n, reps, la, g1);
        let tail = tail_matrix(reps, omega, beta, l1);
        let cfg = DevConfig { tau: 2, rho: (3, 4), j_max: 10, kappa: 1.0 };
        let got = simulate_development(&body, &tail, &t, &cfg, 123).unwrap();

        // Oracle for the last accident year (only lag 1 observed).
        let mut rng = stream_rng(981, 0);
        let start = t.cell(n, 1).unwrap() / t.premium(n);
        let mut oracle = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut v = start;
            for j in 2..=cfg.j_max {
                let (mu, s) = if j <= cfg.tau {
                    (la + v.ln(), ((g1 + g2 * j as f64 + v.ln()).exp()).sqrt())
                } else {
                    (
                        omega.ln() * beta.powi(j as i32) + v.ln(),
                        ((l1 + l2 * j as f64 + v.ln()).exp()).sqrt(),
                    )
                };
                let z: f64 = rng.sample(StandardNormal);
                v = (mu + s * z).exp();
            }
            oracle.push(v);
        }

        let mut a = got.draws[n - 1].clone();
        let mut b = oracle;
        a.sort_by(|x, y| x.total_cmp(y));
        b.sort_by(|x, y| x.total_cmp(y));
        let ks = ks_statistic(&a, &b);
        let crit = 1.628 * ((a.len() + b.len()) as f64 / (a.len() * b.len()) as f64).sqrt();
        assert!(ks < crit, "KS = {ks:.4}, critical = {crit:.4}");
    }

    fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
        let (mut i, mut j) = (0usize, 0usize);
        let mut d: f64 = 0.0;
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / a.len() as f64;
            let fb = j as f64 / b.len() as f64;
            d = d.max((fa - fb).abs());
        }
        d
    }
}

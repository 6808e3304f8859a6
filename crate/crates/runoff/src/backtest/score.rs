//! Predictive scores: LPD/ELPD, RMSE, percentiles, and paired comparisons.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Log predictive density marginalized over posterior draws:
/// `logsumexp(per-draw log densities) - log S`. All-underflow inputs report
/// `-inf` explicitly.
pub fn lpd(per_draw_log_densities: &[f64]) -> Result<f64> {
    if per_draw_log_densities.is_empty() {
        return Err(Error::validation("LPD needs at least one draw"));
    }
    Ok(log_sum_exp(per_draw_log_densities) - (per_draw_log_densities.len() as f64).ln())
}

/// Root of the mean squared error of the draws against the truth.
pub fn rmse(true_value: f64, draws: &[f64]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::validation("RMSE needs at least one draw"));
    }
    let mse = draws.iter().map(|d| (true_value - d) * (true_value - d)).sum::<f64>()
        / draws.len() as f64;
    Ok(mse.sqrt())
}

/// Fraction of draws strictly below the truth (PIT convention).
pub fn percentile(true_value: f64, draws: &[f64]) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::validation("percentile needs at least one draw"));
    }
    Ok(draws.iter().filter(|&&d| d < true_value).count() as f64 / draws.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Test,
    Validation,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::Test => "test",
            Split::Validation => "validation",
        }
    }
}

/// One scored target cell for one model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoreRow {
    pub line: String,
    pub triangle_id: String,
    pub model: String,
    pub split: Split,
    pub accident_year: usize,
    pub lpd: f64,
    pub rmse: f64,
    pub percentile: f64,
}

/// Per-datapoint scores for every (triangle, model, split).
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn push(&mut self, row: ScoreRow) {
        self.rows.push(row);
    }

    pub fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.model) {
                out.push(r.model.clone());
            }
        }
        out
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.line) {
                out.push(r.line.clone());
            }
        }
        out.sort();
        out
    }

    fn select(&self, model: &str, split: Split, line: Option<&str>) -> Vec<&ScoreRow> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.split == split && line.is_none_or(|l| r.line == l))
            .collect()
    }

    /// Sum of pointwise LPDs: exactly additive over targets.
    pub fn elpd(&self, model: &str, split: Split, line: Option<&str>) -> f64 {
        self.select(model, split, line).iter().map(|r| r.lpd).sum()
    }

    pub fn percentiles(&self, model: &str, split: Split, line: Option<&str>) -> Vec<f64> {
        self.select(model, split, line).iter().map(|r| r.percentile).collect()
    }

    /// `(line, triangle_id, model, split, accident_year, lpd, rmse, percentile)` CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        writer.write_record([
            "line",
            "triangle_id",
            "model",
            "split",
            "accident_year",
            "lpd",
            "rmse",
            "percentile",
        ])?;
        for r in &self.rows {
            writer.write_record([
                r.line.as_str(),
                r.triangle_id.as_str(),
                r.model.as_str(),
                r.split.label(),
                &r.accident_year.to_string(),
                &r.lpd.to_string(),
                &r.rmse.to_string(),
                &r.percentile.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<ScoreTable> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let r = record?;
            let split = match &r[3] {
                "test" => Split::Test,
                "validation" => Split::Validation,
                other => return Err(Error::validation(format!("unknown split '{other}'"))),
            };
            rows.push(ScoreRow {
                line: r[0].to_string(),
                triangle_id: r[1].to_string(),
                model: r[2].to_string(),
                split,
                accident_year: r[4].parse().map_err(|_| bad(&r))?,
                lpd: r[5].parse().map_err(|_| bad(&r))?,
                rmse: r[6].parse().map_err(|_| bad(&r))?,
                percentile: r[7].parse().map_err(|_| bad(&r))?,
            });
        }
        Ok(ScoreTable { rows })
    }
}

fn bad(r: &csv::StringRecord) -> Error {
    Error::validation(format!("cannot parse score row {r:?}"))
}

/// Paired ELPD comparison of two models on identical target sets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ElpdComparison {
    pub line: Option<String>,
    pub split: Split,
    pub model_a: String,
    pub model_b: String,
    pub elpd_a: f64,
    pub elpd_b: f64,
    /// Sum of pointwise LPD differences (`elpd_a - elpd_b`).
    pub diff: f64,
    /// `sqrt(G * sample variance of the differences)`.
    pub se: f64,
}

/// Pointwise differences over matched `(triangle, accident year)` targets;
/// mismatched target sets are an error.
pub fn elpd_and_diff(
    table: &ScoreTable,
    model_a: &str,
    model_b: &str,
    split: Split,
    line: Option<&str>,
) -> Result<ElpdComparison> {
    let a = table.select(model_a, split, line);
    let b = table.select(model_b, split, line);
    if a.is_empty() {
        return Err(Error::validation(format!("no rows for model '{model_a}'")));
    }
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "target sets differ: {} rows for {model_a}, {} for {model_b}",
            a.len(),
            b.len()
        )));
    }
    let mut diffs = Vec::with_capacity(a.len());
    for (ra, rb) in a.iter().zip(&b) {
        if ra.triangle_id != rb.triangle_id || ra.accident_year != rb.accident_year {
            return Err(Error::validation(format!(
                "target sets differ at ({}, {}) vs ({}, {})",
                ra.triangle_id, ra.accident_year, rb.triangle_id, rb.accident_year
            )));
        }
        diffs.push(ra.lpd - rb.lpd);
    }
    let g = diffs.len() as f64;
    let diff: f64 = diffs.iter().sum();
    let se = if diffs.len() > 1 {
        let mean = diff / g;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (g - 1.0);
        (g * var).sqrt()
    } else {
        0.0
    };
    Ok(ElpdComparison {
        line: line.map(|s| s.to_string()),
        split,
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        elpd_a: a.iter().map(|r| r.lpd).sum(),
        elpd_b: b.iter().map(|r| r.lpd).sum(),
        diff,
        se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lpd_constant_density() {
        assert_eq!(lpd(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn lpd_two_draw_arithmetic() {
        // Densities {1, e^-2}: LPD = log((1 + e^-2) / 2) = -0.56622...
        let got = lpd(&[0.0, -2.0]).unwrap();
        let expect = ((1.0 + (-2.0f64).exp()) / 2.0).ln();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - (-0.56622)).abs() < 1e-5);
    }

    #[test]
    fn lpd_underflow_reports_neg_inf() {
        assert_eq!(lpd(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn lpd_shift_exactness() {
        let base = [-1.3, -0.2, -2.7];
        let shifted: Vec<f64> = base.iter().map(|x| x + 700.0).collect();
        assert!((lpd(&shifted).unwrap() - lpd(&base).unwrap() - 700.0).abs() < 1e-9);
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(5.0, &[5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(rmse(5.0, &[6.0, 4.0]).unwrap(), 1.0);
    }

    #[test]
    fn rmse_converges_to_sigma() {
        let mut rng = crate::seed::stream_rng(81, 0);
        use rand::Rng;
        let sigma = 2.5;
        let draws: Vec<f64> = (0..400_000)
            .map(|_| 10.0 + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let got = rmse(10.0, &draws).unwrap();
        assert!((got - sigma).abs() < 0.01 * sigma, "{got}");
    }

    #[test]
    fn percentile_cases() {
        assert_eq!(percentile(0.0, &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(percentile(3.0, &[1.0, 2.0]).unwrap(), 1.0);
        let draws: Vec<f64> = (1..=101).map(|k| k as f64).collect();
        let p = percentile(51.0, &draws).unwrap();
        assert!((p - 0.5).abs() <= 1.0 / draws.len() as f64);
    }

    #[test]
    fn percentile_invariant_under_monotone_transform() {
        let draws = [0.3, 1.8, 0.9, 2.4, 0.1];
        let truth = 1.0;
        let p1 = percentile(truth, &draws).unwrap();
        let t: Vec<f64> = draws.iter().map(|x| x.exp()).collect();
        let p2 = percentile(truth.exp(), &t).unwrap();
        assert_eq!(p1, p2);
    }

    proptest::proptest! {
        #[test]
        fn percentile_invariance_property(
            draws in proptest::collection::vec(-50.0f64..50.0, 1..200),
            truth in -50.0f64..50.0,
            scale in 0.1f64..10.0,
            shift in -20.0f64..20.0,
        ) {
            let p1 = percentile(truth, &draws).unwrap();
            let t: Vec<f64> = draws.iter().map(|x| scale * x + shift).collect();
            let p2 = percentile(scale * truth + shift, &t).unwrap();
            proptest::prop_assert_eq!(p1, p2);
        }

        #[test]
        fn lpd_shift_property(
            dens in proptest::collection::vec(-30.0f64..5.0, 1..50),
            c in -100.0f64..100.0,
        ) {
            let shifted: Vec<f64> = dens.iter().map(|x| x + c).collect();
            let d = lpd(&shifted).unwrap() - lpd(&dens).unwrap();
            proptest::prop_assert!((d - c).abs() < 1e-9);
        }
    }

    fn row(t: &str, model: &str, year: usize, lpd: f64) -> ScoreRow {
        ScoreRow {
            line: "CA".into(),
            triangle_id: t.into(),
            model: model.into(),
            split: Split::Validation,
            accident_year: year,
            lpd,
            rmse: 1.0,
            percentile: 0.5,
        }
    }

    #[test]
    fn elpd_additivity_and_diff() {
        let mut table = ScoreTable::default();
        for (t, la, lb) in [("T1", 2.0, 0.0), ("T2", 0.0, 0.0)] {
            table.push(row(t, "a", 10, la));
            table.push(row(t, "b", 10, lb));
        }
        assert_eq!(table.elpd("a", Split::Validation, None), 2.0);
        let cmp = elpd_and_diff(&table, "a", "b", Split::Validation, None).unwrap();
        assert_eq!(cmp.diff, 2.0);
        assert!((cmp.se - 2.0).abs() < 1e-12, "d = {{2, 0}} has SE sqrt(2 * 2) = 2");
    }

    #[test]
    fn identical_models_zero_diff() {
        let mut table = ScoreTable::default();
        for t in ["T1", "T2", "T3"] {
            table.push(row(t, "a", 10, -1.5));
            table.push(row(t, "b", 10, -1.5));
        }
        let cmp = elpd_and_diff(&table, "a", "b", Split::Validation, None).unwrap();
        assert_eq!(cmp.diff, 0.0);
        assert_eq!(cmp.se, 0.0);
    }

    #[test]
    fn constant_differences_zero_se() {
        let mut table = ScoreTable::default();
        for t in ["T1", "T2", "T3", "T4"] {
            table.push(row(t, "a", 10, 0.0));
            table.push(row(t, "b", 10, -1.0));
        }
        let cmp = elpd_and_diff(&table, "a", "b", Split::Validation, None).unwrap();
        assert_eq!(cmp.diff, 4.0);
        assert_eq!(cmp.se, 0.0);
    }

    #[test]
    fn mismatched_targets_rejected() {
        let mut table = ScoreTable::default();
        table.push(row("T1", "a", 10, 0.0));
        table.push(row("T1", "b", 10, 0.0));
        table.push(row("T2", "a", 10, 0.0));
        assert!(elpd_and_diff(&table, "a", "b", Split::Validation, None).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut table = ScoreTable::default();
        table.push(row("T1", "a", 10, -1.25));
        table.push(row("T1", "b", 10, f64::NEG_INFINITY));
        let dir = std::env::temp_dir().join(format!("runoff-scores-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("scores.csv");
        table.write_csv(&path).unwrap();
        let back = ScoreTable::read_csv(&path).unwrap();
        assert_eq!(table, back);
    }
}

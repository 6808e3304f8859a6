//! End-to-end leave-future-out backtest over a corpus of full squares:
//! mask, fit development models per triangle, pool forecasters per line,
//! score every held-out ultimate, and stack.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backtest::score::{
    elpd_and_diff, lpd, percentile, rmse, ElpdComparison, ScoreRow, ScoreTable, Split,
};
use crate::backtest::split::{make_split, BacktestSplit};
use crate::dev::{simulate_development, BondyModel, ChainLadderModel, DevConfig, UltimateSummary};
use crate::error::{Error, Result};
use crate::forecast::{
    ForecastKind, HierarchicalConfig, HierarchicalModel, MeasurementErrorInput, ProgramInput,
    ProgramNames, ProgramView,
};
use crate::inference::{sample, DrawMatrix, SamplerConfig};
use crate::math::mean_sd;
use crate::seed::{derive, stream_rng};
use crate::stacking::{blend, fit_stack, StackInput, StackWeights};
use crate::triangle::Triangle;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Development windows per line of business; lines not listed fall back
    /// to `DevConfig::defaults`.
    pub line_dev: BTreeMap<String, DevConfig>,
    pub sampler_dev: SamplerConfig,
    pub sampler_forecast: SamplerConfig,
    pub models: Vec<ForecastKind>,
    pub stack: bool,
    /// Prior scale multiplier fed into every model.
    pub kappa: f64,
    /// Explicit `(E[r], SD[r])` for the latent-ratio prior; `None` derives
    /// them from the observed first-row ultimates of each line.
    pub me_prior: Option<(f64, f64)>,
    /// Restrict scored test rows to these accident years.
    pub test_years: Option<Vec<usize>>,
    pub seed: u64,
}

impl BacktestConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            line_dev: BTreeMap::new(),
            sampler_dev: SamplerConfig::default(),
            sampler_forecast: SamplerConfig::default(),
            models: vec![ForecastKind::RandomWalk, ForecastKind::MeanReversion],
            stack: true,
            kappa: 1.0,
            me_prior: None,
            test_years: None,
            seed,
        }
    }

    /// Reduced-draw settings for desk-scale runs.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            sampler_dev: SamplerConfig { chains: 2, warmup: 400, draws: 500, ..Default::default() },
            sampler_forecast: SamplerConfig {
                chains: 2,
                warmup: 500,
                draws: 500,
                ..Default::default()
            },
            ..Self::new(seed)
        }
    }
}

/// Everything a backtest run produces.
pub struct BacktestOutput {
    pub scores: ScoreTable,
    pub comparisons: Vec<ElpdComparison>,
    /// Stacking weights per line.
    pub weights: Vec<(String, StackWeights)>,
    /// Triangles dropped by per-triangle failures, with reasons.
    pub failures: Vec<String>,
    /// Developed ultimates per surviving triangle (training mask only).
    pub ultimates: Vec<UltimateSummary>,
    /// `(line, model label, draws)` for each hierarchical forecast fit.
    pub forecast_fits: Vec<(String, String, DrawMatrix)>,
    /// `(line, triangle, body draws, tail draws)` for each dev fit.
    pub dev_fits: Vec<(String, String, DrawMatrix, DrawMatrix)>,
}

struct FittedTriangle {
    triangle: Triangle,
    split: BacktestSplit,
    summary: UltimateSummary,
    body: DrawMatrix,
    tail: DrawMatrix,
}

/// Run the full backtest. Deterministic given `(corpus order, cfg)`.
pub fn run_backtest(corpus: &[Triangle], cfg: &BacktestConfig) -> Result<BacktestOutput> {
    if corpus.is_empty() {
        return Err(Error::validation("backtest needs a nonempty corpus"));
    }
    if cfg.models.is_empty() {
        return Err(Error::validation("backtest needs at least one forecast model"));
    }
    cfg.sampler_dev.validate()?;
    cfg.sampler_forecast.validate()?;

    // Group by line, preserving corpus order within each line.
    let mut lines: BTreeMap<String, Vec<&Triangle>> = BTreeMap::new();
    for t in corpus {
        lines.entry(t.line().to_string()).or_default().push(t);
    }
    for (line, ts) in &lines {
        if ts.len() < 2 {
            return Err(Error::validation(format!(
                "line {line}: hierarchical forecasting needs at least 2 triangles, got {}",
                ts.len()
            )));
        }
    }

    let mut output = BacktestOutput {
        scores: ScoreTable::default(),
        comparisons: Vec::new(),
        weights: Vec::new(),
        failures: Vec::new(),
        ultimates: Vec::new(),
        forecast_fits: Vec::new(),
        dev_fits: Vec::new(),
    };

    for (line_idx, (line, triangles)) in lines.iter().enumerate() {
        let line_seed = derive(cfg.seed, line_idx as u64);
        run_line(line, triangles, cfg, line_seed, &mut output)?;
    }

    // Paired comparisons per line and split, for every model pair.
    let models = output.scores.models();
    for line in output.scores.lines() {
        for split in [Split::Test, Split::Validation] {
            for (ai, a) in models.iter().enumerate() {
                for b in models.iter().skip(ai + 1) {
                    output.comparisons.push(elpd_and_diff(
                        &output.scores,
                        a,
                        b,
                        split,
                        Some(&line),
                    )?);
                }
            }
        }
    }
    Ok(output)
}

fn run_line(
    line: &str,
    triangles: &[&Triangle],
    cfg: &BacktestConfig,
    line_seed: u64,
    output: &mut BacktestOutput,
) -> Result<()> {
    // Development stage, per-triangle failures isolated.
    let mut fitted: Vec<FittedTriangle> = Vec::new();
    let mut failures = Vec::new();
    for (t_idx, &t) in triangles.iter().enumerate() {
        let t_seed = derive(line_seed, 1000 + t_idx as u64);
        match fit_triangle(t, cfg, t_seed) {
            Ok(f) => fitted.push(f),
            Err(e) => failures.push(format!("{line}/{}: {e}", t.id())),
        }
    }
    if failures.len() * 4 > triangles.len() {
        return Err(Error::computation(format!(
            "line {line}: {} of {} triangles failed development fitting: {}",
            failures.len(),
            triangles.len(),
            failures.join("; ")
        )));
    }
    output.failures.extend(failures);
    if fitted.len() < 2 {
        return Err(Error::computation(format!(
            "line {line}: fewer than 2 triangles survived development fitting"
        )));
    }

    // Empirical measurement-error prior from observed first-row ultimates.
    let (prior_mean, prior_sd) = match cfg.me_prior {
        Some(pair) => pair,
        None => {
            let observed: Vec<f64> = fitted
                .iter()
                .map(|f| f.split.observed_ultimate / f.triangle.premium(1))
                .collect();
            mean_sd(&observed)
        }
    };
    if !prior_sd.is_finite() || prior_sd <= 0.0 {
        return Err(Error::computation(format!(
            "line {line}: degenerate empirical loss-ratio spread (SD[r] = {prior_sd})"
        )));
    }

    // Forecast inputs: development summaries for accident years 1..N-1; the
    // last year is predicted as a genuine future year.
    let programs: Result<Vec<ProgramInput>> = fitted
        .iter()
        .map(|f| {
            let n = f.triangle.n_accident_years();
            let me = MeasurementErrorInput::new(
                f.summary.means[..n - 1].to_vec(),
                f.summary.sds[..n - 1].to_vec(),
                prior_mean,
                prior_sd,
            )?;
            Ok(ProgramInput {
                id: f.triangle.id().to_string(),
                me,
                premiums: f.triangle.premiums()[..n - 1].to_vec(),
            })
        })
        .collect();
    let programs = programs?;

    for f in &fitted {
        output.ultimates.push(f.summary.clone());
    }

    // Hierarchical fits and scoring per model; per-target records feed the
    // stacking stage afterwards.
    let mut test_targets: TargetMap = BTreeMap::new();
    let mut val_targets: TargetMap = BTreeMap::new();

    for (k_idx, &kind) in cfg.models.iter().enumerate() {
        let hier_cfg = HierarchicalConfig { kind, kappa: cfg.kappa, informed_prior: true };
        let model = HierarchicalModel::new(programs.clone(), hier_cfg)?;
        let fit_seed = derive(line_seed, 2000 + k_idx as u64);
        let draws = sample(&model, &cfg.sampler_forecast.clone().with_seed(fit_seed))?;

        for (g_idx, f) in fitted.iter().enumerate() {
            let n = f.triangle.n_accident_years();
            let names = ProgramNames::grouped(g_idx + 1, n - 1, kind);
            let view = ProgramView::resolve(&draws, &names)?;
            score_triangle(
                line,
                f,
                kind,
                &view,
                &draws,
                cfg,
                derive(fit_seed, g_idx as u64),
                &mut output.scores,
                &mut test_targets,
                &mut val_targets,
            )?;
        }
        output.forecast_fits.push((line.to_string(), kind.label().to_string(), draws));
    }

    for f in fitted {
        output.dev_fits.push((
            line.to_string(),
            f.triangle.id().to_string(),
            f.body,
            f.tail,
        ));
    }

    // Stacking on the test split only.
    if cfg.stack && cfg.models.len() >= 2 {
        let model_names: Vec<String> =
            cfg.models.iter().map(|k| k.label().to_string()).collect();
        let mut ids = Vec::new();
        let mut lpd_rows = Vec::new();
        for (key, target) in &test_targets {
            ids.push(format!("{}@{}", key.0, key.1));
            lpd_rows.push(target.lpds.clone());
        }
        let input = StackInput::new(model_names, ids, lpd_rows)?;
        let weights = fit_stack(&input, 1e-10, 10_000)?;
        stacked_rows(line, &weights, &test_targets, Split::Test, derive(line_seed, 3000), &mut output.scores)?;
        stacked_rows(
            line,
            &weights,
            &val_targets,
            Split::Validation,
            derive(line_seed, 3001),
            &mut output.scores,
        )?;
        output.weights.push((line.to_string(), weights));
    }
    Ok(())
}

fn fit_triangle(t: &Triangle, cfg: &BacktestConfig, seed: u64) -> Result<FittedTriangle> {
    let m = t.n_dev_lags();
    let dev = cfg
        .line_dev
        .get(t.line())
        .copied()
        .unwrap_or_else(|| DevConfig::defaults(m))
        .with_kappa(cfg.kappa);
    // Ultimates live on the right edge of the square under the backtest
    // assumption, so the simulation horizon is lag M.
    let dev = DevConfig { j_max: m, ..dev };
    let split = make_split(t)?;
    let body_model = ChainLadderModel::new(&split.train, &dev)?;
    let tail_model = BondyModel::new(&split.train, &dev)?;
    let body = sample(&body_model, &cfg.sampler_dev.clone().with_seed(derive(seed, 1)))?;
    let tail = sample(&tail_model, &cfg.sampler_dev.clone().with_seed(derive(seed, 2)))?;
    let summary = simulate_development(&body, &tail, &split.train, &dev, derive(seed, 3))?;
    Ok(FittedTriangle { triangle: t.clone(), split, summary, body, tail })
}

/// Truth and per-model predictions for one scored target.
struct TargetData {
    r_true: f64,
    premium: f64,
    /// Per-model LPD, in `cfg.models` order.
    lpds: Vec<f64>,
    /// Per-model predictive ratio draws, in `cfg.models` order.
    draws: Vec<Vec<f64>>,
}

type TargetMap = BTreeMap<(String, usize), TargetData>;

#[allow(clippy::too_many_arguments)]
fn score_triangle(
    line: &str,
    f: &FittedTriangle,
    kind: ForecastKind,
    view: &ProgramView,
    draws: &DrawMatrix,
    cfg: &BacktestConfig,
    seed: u64,
    scores: &mut ScoreTable,
    test_targets: &mut TargetMap,
    val_targets: &mut TargetMap,
) -> Result<()> {
    let s_total = draws.total_draws();
    let id = f.triangle.id().to_string();

    let mut targets: Vec<(Split, usize, f64)> = f
        .split
        .test_targets
        .iter()
        .filter(|(i, _)| cfg.test_years.as_ref().is_none_or(|ys| ys.contains(i)))
        .map(|&(i, y)| (Split::Test, i, y))
        .collect();
    targets.push((Split::Validation, f.split.validation_target.0, f.split.validation_target.1));

    for (split, year, y_true) in targets {
        let premium = f.triangle.premium(year);
        let r_true = y_true / premium;
        let mut log_dens = Vec::with_capacity(s_total);
        let mut ratio_draws = Vec::with_capacity(s_total);
        let mut rng = stream_rng(seed, year as u64);
        for s in 0..s_total {
            let p = view.params(draws, s);
            match split {
                Split::Test => {
                    log_dens.push(p.insample_logpdf(year, r_true, premium));
                    ratio_draws.push(p.insample_draw(year, premium, &mut rng));
                }
                Split::Validation => {
                    log_dens.push(p.onestep_logpdf(r_true, premium));
                    ratio_draws.push(p.onestep_draw(premium, &mut rng));
                }
            }
        }
        let lpd_val = lpd(&log_dens)?;
        let loss_draws: Vec<f64> = ratio_draws.iter().map(|r| r * premium).collect();
        scores.push(ScoreRow {
            line: line.to_string(),
            triangle_id: id.clone(),
            model: kind.label().to_string(),
            split,
            accident_year: year,
            lpd: lpd_val,
            rmse: rmse(y_true, &loss_draws)?,
            percentile: percentile(r_true, &ratio_draws)?,
        });
        let map = match split {
            Split::Test => &mut *test_targets,
            Split::Validation => &mut *val_targets,
        };
        let entry = map.entry((id.clone(), year)).or_insert_with(|| TargetData {
            r_true,
            premium,
            lpds: Vec::new(),
            draws: Vec::new(),
        });
        entry.lpds.push(lpd_val);
        entry.draws.push(ratio_draws);
    }
    Ok(())
}

fn stacked_rows(
    line: &str,
    weights: &StackWeights,
    targets: &TargetMap,
    split: Split,
    seed: u64,
    scores: &mut ScoreTable,
) -> Result<()> {
    for (point_idx, ((id, year), target)) in targets.iter().enumerate() {
        // Blended predictive density: log sum_k w_k exp(LPD_k).
        let terms: Vec<f64> = target
            .lpds
            .iter()
            .zip(&weights.weights)
            .map(|(l, w)| l + w.ln())
            .collect();
        let blended_lpd = crate::math::log_sum_exp(&terms);
        let n_out = target.draws[0].len();
        let blended = blend(weights, &target.draws, n_out, derive(seed, point_idx as u64))?;
        let loss_draws: Vec<f64> = blended.iter().map(|r| r * target.premium).collect();
        scores.push(ScoreRow {
            line: line.to_string(),
            triangle_id: id.clone(),
            model: "stacked".to_string(),
            split,
            accident_year: *year,
            lpd: blended_lpd,
            rmse: rmse(target.r_true * target.premium, &loss_draws)?,
            percentile: percentile(target.r_true, &blended)?,
        });
    }
    Ok(())
}

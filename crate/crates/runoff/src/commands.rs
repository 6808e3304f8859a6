//! Orchestration behind the `runoff` binary: each command reads the shared
//! run configuration, produces its artifacts under
//! `<output_dir>/<command>/`, and finishes with a manifest listing every
//! emitted file with a content hash so reruns can be verified byte-for-byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{run_backtest, BacktestConfig, Split};
use crate::cashflow::{cashflow_summary, prediction_factors, walkback, CashflowPaths};
use crate::config::{MePrior, RunConfig};
use crate::dev::{simulate_development, BondyModel, ChainLadderModel, UltimateSummary};
use crate::error::{Error, Result};
use crate::forecast::{
    forecast_program, ForecastDraws, ForecastKind, ForecastModel, ForecastPriors,
    HierarchicalConfig, HierarchicalModel, MeasurementErrorInput, ProgramInput, ProgramNames,
    ProgramView,
};
use crate::inference::{divergence_fraction, ess, rhat, sample, DrawMatrix};
use crate::math::mean_sd;
use crate::seed::derive;
use crate::stacking::{fit_stack, StackInput};
use crate::triangle::{load_triangles, Triangle};
use crate::validate::{predictive_check, run_sbc, PredictiveCheck, PredictiveMode, SbcConfig, SbcFamily};

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility record: merged config, its hash, and every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub files: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Tracks a command's output directory and the files written into it.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Outputs {
    pub fn new(cfg: &RunConfig, command: &str) -> Result<Self> {
        let dir = cfg.output_dir.join(command);
        std::fs::create_dir_all(&dir)?;
        std::fs::create_dir_all(dir.join("draws"))?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Hash a file that was just written and add it to the manifest list.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.path(name))?;
        self.files.push(ManifestEntry { path: name.to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// Record a draw-matrix CSV plus its metadata sidecar.
    pub fn record_draws(&mut self, name: &str) -> Result<()> {
        self.record(name)?;
        self.record(&format!("{name}.meta.json"))
    }

    pub fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config_hash: sha256_hex(cfg.canonical_json()?.as_bytes()),
            config: cfg.clone(),
            files: std::mem::take(&mut self.files),
        };
        std::fs::write(self.path("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

fn max_rhat(d: &DrawMatrix) -> f64 {
    let mut worst = 0.0f64;
    for name in d.names() {
        if let Ok(r) = rhat(d, name) {
            worst = worst.max(r);
        }
    }
    worst
}

fn min_ess(d: &DrawMatrix) -> f64 {
    let mut worst = f64::INFINITY;
    for name in d.names() {
        if let Ok(e) = ess(d, name) {
            worst = worst.min(e);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// develop
// ---------------------------------------------------------------------------

/// Fit body + tail models per triangle, simulate developed ultimates, and
/// write summaries, draw archives and a convergence report.
pub fn cmd_develop(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let triangles = load_triangles(&cfg.input)?;
    if triangles.is_empty() {
        return Err(Error::validation("input corpus holds no triangles"));
    }
    // Window settings must be coherent with every triangle before any fit.
    for t in &triangles {
        cfg.dev_config_for(t.line(), t.n_dev_lags())?;
    }
    let mut out = Outputs::new(cfg, "develop")?;

    let mut ultimates_writer = csv::Writer::from_path(out.path("ultimates.csv"))?;
    ultimates_writer.write_record(UltimateSummary::csv_header())?;
    let mut convergence = csv::Writer::from_path(out.path("convergence.csv"))?;
    convergence.write_record([
        "triangle_id",
        "model",
        "max_rhat",
        "min_ess",
        "divergences",
        "mean_accept",
    ])?;
    let mut overlays = csv::Writer::from_path(out.path("predictive_overlays.csv"))?;
    overlays.write_record(PredictiveCheck::csv_header())?;
    let mut coverage = csv::Writer::from_path(out.path("predictive_coverage.csv"))?;
    coverage.write_record(["triangle_id", "n_cells", "coverage50", "coverage90"])?;

    let mut failures: Vec<String> = Vec::new();
    let mut n_ok = 0usize;
    let mut archive_names: Vec<String> = Vec::new();
    for (t_idx, t) in triangles.iter().enumerate() {
        let seed = derive(cfg.seed, t_idx as u64);
        match develop_one(cfg, t, seed) {
            Ok((summary, body, tail)) => {
                // Posterior predictive overlays and one-step coverage.
                let dev = cfg.dev_config_for(t.line(), t.n_dev_lags())?;
                let check = predictive_check(
                    &body,
                    &tail,
                    t,
                    &dev,
                    PredictiveMode::Posterior,
                    30.min(body.total_draws()),
                    derive(seed, 4),
                )?;
                check.write_trajectories_csv(&mut overlays, t.id())?;
                coverage.write_record([
                    t.id(),
                    &check.n_cells.to_string(),
                    &check.coverage50.to_string(),
                    &check.coverage90.to_string(),
                ])?;
                summary.write_csv(&mut ultimates_writer)?;
                for (model, d) in [("chain_ladder", &body), ("bondy", &tail)] {
                    convergence.write_record([
                        t.id(),
                        model,
                        &max_rhat(d).to_string(),
                        &min_ess(d).to_string(),
                        &d.meta().total_divergences().to_string(),
                        &mean_sd(&d.meta().accept_rates).0.to_string(),
                    ])?;
                }
                let body_name = format!("draws/dev_body_{}.csv", t.id());
                let tail_name = format!("draws/dev_tail_{}.csv", t.id());
                body.write_csv(out.path(&body_name))?;
                tail.write_csv(out.path(&tail_name))?;
                let draws_name = format!("draws/ultimates_{}.csv", t.id());
                summary.write_draws_csv(out.path(&draws_name))?;
                archive_names.extend([body_name, tail_name]);
                archive_names.push(draws_name);
                n_ok += 1;
            }
            Err(e) => failures.push(format!("{}: {e}", t.id())),
        }
    }
    ultimates_writer.flush()?;
    convergence.flush()?;
    overlays.flush()?;
    coverage.flush()?;
    out.record("ultimates.csv")?;
    out.record("convergence.csv")?;
    out.record("predictive_overlays.csv")?;
    out.record("predictive_coverage.csv")?;
    for name in &archive_names {
        if name.contains("ultimates_") {
            out.record(name)?;
        } else {
            out.record_draws(name)?;
        }
    }
    if !failures.is_empty() {
        std::fs::write(out.path("failures.txt"), failures.join("\n") + "\n")?;
        out.record("failures.txt")?;
        eprintln!("develop: {} triangle(s) failed:\n  {}", failures.len(), failures.join("\n  "));
    }
    if n_ok == 0 {
        return Err(Error::computation("develop: every triangle failed".to_string()));
    }
    out.finish("develop", cfg)
}

fn develop_one(
    cfg: &RunConfig,
    t: &Triangle,
    seed: u64,
) -> Result<(UltimateSummary, DrawMatrix, DrawMatrix)> {
    let dev = cfg.dev_config_for(t.line(), t.n_dev_lags())?;
    let body_model = ChainLadderModel::new(t, &dev)?;
    let tail_model = BondyModel::new(t, &dev)?;
    let sampler = cfg.sampler;
    let body = sample(&body_model, &sampler.to_config(derive(seed, 1)))?;
    let tail = sample(&tail_model, &sampler.to_config(derive(seed, 2)))?;
    for d in [&body, &tail] {
        if divergence_fraction(d) > 0.1 {
            eprintln!(
                "develop: {}: {:.1}% divergent transitions",
                t.id(),
                100.0 * divergence_fraction(d)
            );
        }
    }
    let summary = simulate_development(&body, &tail, t, &dev, derive(seed, 3))?;
    Ok((summary, body, tail))
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

/// Fit the state-space forecasters on development outputs (hierarchically
/// per line when a line holds several triangles) and emit predictive draws
/// for the configured horizon.
pub fn cmd_forecast(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let summaries_path = cfg.output_dir.join("develop").join("ultimates.csv");
    if !summaries_path.exists() {
        return Err(Error::validation(format!(
            "missing development outputs at {}; run `develop` first",
            summaries_path.display()
        )));
    }
    let summaries = UltimateSummary::read_csv(&summaries_path)?;
    let triangles = load_triangles(&cfg.input)?;
    let by_id: BTreeMap<&str, &Triangle> =
        triangles.iter().map(|t| (t.id(), t)).collect();

    let mut out = Outputs::new(cfg, "forecast")?;
    let mut lines: BTreeMap<String, Vec<&UltimateSummary>> = BTreeMap::new();
    for s in &summaries {
        let t = by_id.get(s.triangle_id.as_str()).ok_or_else(|| {
            Error::validation(format!("summary for unknown triangle '{}'", s.triangle_id))
        })?;
        lines.entry(t.line().to_string()).or_default().push(s);
    }

    let mut writers: BTreeMap<String, csv::Writer<std::fs::File>> = BTreeMap::new();
    for kind in cfg.models.kinds() {
        let mut w = csv::Writer::from_path(out.path(&format!("forecast_{}.csv", kind.label())))?;
        w.write_record(ForecastDraws::csv_header())?;
        writers.insert(kind.label().to_string(), w);
    }

    let mut archives: Vec<String> = Vec::new();
    for (line_idx, (line, line_summaries)) in lines.iter().enumerate() {
        let line_seed = derive(cfg.seed, line_idx as u64);
        let (prior_mean, prior_sd) = me_prior_for(cfg, line_summaries)?;
        for kind in cfg.models.kinds() {
            forecast_line(
                cfg,
                line,
                line_summaries,
                &by_id,
                kind,
                prior_mean,
                prior_sd,
                line_seed,
                &mut out,
                &mut writers,
                &mut archives,
            )?;
        }
    }
    for (_, mut w) in writers {
        w.flush()?;
    }
    for kind in cfg.models.kinds() {
        out.record(&format!("forecast_{}.csv", kind.label()))?;
    }
    for name in &archives {
        out.record_draws(name)?;
    }
    out.finish("forecast", cfg)
}

fn me_prior_for(cfg: &RunConfig, summaries: &[&UltimateSummary]) -> Result<(f64, f64)> {
    match cfg.me_prior {
        MePrior::Explicit { mean, sd } => Ok((mean, sd)),
        MePrior::Auto => {
            let all: Vec<f64> = summaries.iter().flat_map(|s| s.means.iter().copied()).collect();
            let (mean, sd) = mean_sd(&all);
            if !sd.is_finite() || sd <= 0.0 {
                return Err(Error::computation(
                    "auto measurement-error prior needs spread in the developed ratios",
                ));
            }
            Ok((mean, sd))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn forecast_line(
    cfg: &RunConfig,
    line: &str,
    summaries: &[&UltimateSummary],
    by_id: &BTreeMap<&str, &Triangle>,
    kind: ForecastKind,
    prior_mean: f64,
    prior_sd: f64,
    line_seed: u64,
    out: &mut Outputs,
    writers: &mut BTreeMap<String, csv::Writer<std::fs::File>>,
    archives: &mut Vec<String>,
) -> Result<()> {
    let kind_seed = derive(line_seed, kind.label().len() as u64);
    let writer = writers.get_mut(kind.label()).expect("writer per model");
    if summaries.len() >= 2 {
        let programs: Result<Vec<ProgramInput>> = summaries
            .iter()
            .map(|s| {
                let t = by_id[s.triangle_id.as_str()];
                Ok(ProgramInput {
                    id: s.triangle_id.clone(),
                    me: MeasurementErrorInput::new(
                        s.means.clone(),
                        s.sds.clone(),
                        prior_mean,
                        prior_sd,
                    )?,
                    premiums: t.premiums().to_vec(),
                })
            })
            .collect();
        let model = HierarchicalModel::new(
            programs?,
            HierarchicalConfig { kind, kappa: cfg.kappa, informed_prior: true },
        )?;
        let draws = sample(&model, &cfg.sampler.to_config(derive(kind_seed, 1)))?;
        for (g_idx, s) in summaries.iter().enumerate() {
            let t = by_id[s.triangle_id.as_str()];
            let names = ProgramNames::grouped(g_idx + 1, s.means.len(), kind);
            let view = ProgramView::resolve(&draws, &names)?;
            let premiums = future_premiums(cfg, t);
            let f = forecast_program(&draws, &view, cfg.horizon, &premiums, derive(kind_seed, 100 + g_idx as u64))?;
            f.write_csv(writer, &s.triangle_id, t.n_accident_years())?;
        }
        let name = format!("draws/forecast_{line}_{}.csv", kind.label());
        draws.write_csv(out.path(&name))?;
        archives.push(name);
    } else {
        let s = summaries[0];
        let t = by_id[s.triangle_id.as_str()];
        let me = MeasurementErrorInput::new(s.means.clone(), s.sds.clone(), prior_mean, prior_sd)?;
        let model =
            ForecastModel::new(kind, me, t.premiums().to_vec(), ForecastPriors::defaults(cfg.kappa))?;
        let draws = sample(&model, &cfg.sampler.to_config(derive(kind_seed, 1)))?;
        let names = ProgramNames::single(s.means.len(), kind);
        let view = ProgramView::resolve(&draws, &names)?;
        let premiums = future_premiums(cfg, t);
        let f = forecast_program(&draws, &view, cfg.horizon, &premiums, derive(kind_seed, 100))?;
        f.write_csv(writer, &s.triangle_id, t.n_accident_years())?;
        let name = format!("draws/forecast_{}_{}.csv", s.triangle_id, kind.label());
        draws.write_csv(out.path(&name))?;
        archives.push(name);
    }
    Ok(())
}

fn future_premiums(cfg: &RunConfig, t: &Triangle) -> Vec<f64> {
    match &cfg.future_premiums {
        Some(p) if p.len() >= cfg.horizon => p[..cfg.horizon].to_vec(),
        Some(p) => {
            eprintln!(
                "forecast: {}: {} future premiums for horizon {}; repeating the last",
                t.id(),
                p.len(),
                cfg.horizon
            );
            let mut v = p.clone();
            while v.len() < cfg.horizon {
                v.push(*p.last().expect("nonempty"));
            }
            v
        }
        None => {
            let last = t.premium(t.n_accident_years());
            eprintln!(
                "forecast: {}: no future premiums configured; assuming the last observed premium {last}",
                t.id()
            );
            vec![last; cfg.horizon]
        }
    }
}

// ---------------------------------------------------------------------------
// sbc
// ---------------------------------------------------------------------------

/// Run simulation-based calibration per the `sbc` config block.
pub fn cmd_sbc(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut out = Outputs::new(cfg, "sbc")?;
    let family = match cfg.sbc.family.as_str() {
        "dev" => SbcFamily::Dev,
        "rw" => SbcFamily::Forecast { kind: ForecastKind::RandomWalk },
        "mr" => SbcFamily::Forecast { kind: ForecastKind::MeanReversion },
        other => return Err(Error::validation(format!("unknown SBC family '{other}'"))),
    };
    let mut sbc_cfg = SbcConfig::dev_defaults(cfg.sbc.n_years, cfg.sbc.n_sims);
    sbc_cfg.family = family;
    sbc_cfg.dev.kappa = cfg.kappa;
    sbc_cfg.sampler = cfg.sampler.to_config(0);
    sbc_cfg.thin_to = cfg.sbc.thin_to;
    sbc_cfg.bins = cfg.sbc.bins;
    sbc_cfg.fit_sigma_scale = cfg.sbc.fit_sigma_scale;
    sbc_cfg.seed = cfg.seed;
    let report = run_sbc(&sbc_cfg)?;
    if report.unreliable {
        eprintln!(
            "sbc: {} of {} simulations excluded; report flagged unreliable",
            report.n_excluded, report.n_sims
        );
    }
    report.write_json(out.path("sbc_report.json"))?;
    report.write_ranks_csv(out.path("sbc_ranks.csv"))?;
    out.record("sbc_report.json")?;
    out.record("sbc_ranks.csv")?;
    out.finish("sbc", cfg)
}

// ---------------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------------

/// Leave-future-out backtest over the corpus of full squares.
pub fn cmd_backtest(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let triangles = load_triangles(&cfg.input)?;
    let mut out = Outputs::new(cfg, "backtest")?;

    let mut line_dev = BTreeMap::new();
    for t in &triangles {
        if !line_dev.contains_key(t.line()) {
            let dev = cfg.dev_config_for(t.line(), t.n_dev_lags())?;
            line_dev.insert(t.line().to_string(), dev);
        }
    }
    let bt_cfg = BacktestConfig {
        line_dev,
        sampler_dev: cfg.sampler.to_config(0),
        sampler_forecast: cfg.sampler.to_config(0),
        models: cfg.models.kinds(),
        stack: cfg.models.stack,
        kappa: cfg.kappa,
        me_prior: match cfg.me_prior {
            MePrior::Auto => None,
            MePrior::Explicit { mean, sd } => Some((mean, sd)),
        },
        test_years: None,
        seed: cfg.seed,
    };
    let result = run_backtest(&triangles, &bt_cfg)?;

    result.scores.write_csv(out.path("scores.csv"))?;
    out.record("scores.csv")?;
    std::fs::write(
        out.path("comparisons.json"),
        serde_json::to_string_pretty(&result.comparisons)?,
    )?;
    out.record("comparisons.json")?;
    let weights: BTreeMap<String, BTreeMap<String, f64>> = result
        .weights
        .iter()
        .map(|(line, w)| {
            (
                line.clone(),
                w.model_names.iter().cloned().zip(w.weights.iter().copied()).collect(),
            )
        })
        .collect();
    std::fs::write(out.path("weights.json"), serde_json::to_string_pretty(&weights)?)?;
    out.record("weights.json")?;

    let mut ult = csv::Writer::from_path(out.path("ultimates.csv"))?;
    ult.write_record(UltimateSummary::csv_header())?;
    for s in &result.ultimates {
        s.write_csv(&mut ult)?;
    }
    ult.flush()?;
    out.record("ultimates.csv")?;

    for (line, model, draws) in &result.forecast_fits {
        let name = format!("draws/forecast_{line}_{model}.csv");
        draws.write_csv(out.path(&name))?;
        out.record_draws(&name)?;
    }
    for (_, id, body, tail) in &result.dev_fits {
        let body_name = format!("draws/dev_body_{id}.csv");
        let tail_name = format!("draws/dev_tail_{id}.csv");
        body.write_csv(out.path(&body_name))?;
        tail.write_csv(out.path(&tail_name))?;
        out.record_draws(&body_name)?;
        out.record_draws(&tail_name)?;
    }
    if !result.failures.is_empty() {
        std::fs::write(out.path("failures.txt"), result.failures.join("\n") + "\n")?;
        out.record("failures.txt")?;
    }
    out.finish("backtest", cfg)
}

// ---------------------------------------------------------------------------
// stack
// ---------------------------------------------------------------------------

/// Re-derive stacking weights from an existing backtest score table.
pub fn cmd_stack(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let scores_path = cfg.output_dir.join("backtest").join("scores.csv");
    if !scores_path.exists() {
        return Err(Error::validation(format!(
            "missing backtest outputs at {}; run `backtest` first",
            scores_path.display()
        )));
    }
    let table = crate::backtest::ScoreTable::read_csv(&scores_path)?;
    let mut out = Outputs::new(cfg, "stack")?;
    let models: Vec<String> =
        table.models().into_iter().filter(|m| m != "stacked").collect();
    if models.len() < 2 {
        return Err(Error::validation("stacking needs at least 2 scored models"));
    }

    let mut all_weights: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut stacked = csv::Writer::from_path(out.path("stacked_scores.csv"))?;
    stacked.write_record(["line", "triangle_id", "accident_year", "split", "lpd"])?;
    for line in table.lines() {
        // Per-datapoint LPD matrix on the test split only.
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &table.rows {
            if r.line == line && r.split == Split::Test && r.model == models[0] {
                keys.push((r.triangle_id.clone(), r.accident_year));
            }
        }
        for (id, year) in &keys {
            let mut row = Vec::with_capacity(models.len());
            for m in &models {
                let lpd = table
                    .rows
                    .iter()
                    .find(|r| {
                        r.line == line
                            && r.split == Split::Test
                            && &r.triangle_id == id
                            && r.accident_year == *year
                            && &r.model == m
                    })
                    .map(|r| r.lpd)
                    .ok_or_else(|| {
                        Error::validation(format!("model {m} missing test row {id}@{year}"))
                    })?;
                row.push(lpd);
            }
            ids.push(format!("{id}@{year}"));
            rows.push(row);
        }
        let input = StackInput::new(models.clone(), ids, rows)?;
        let weights = fit_stack(&input, 1e-10, 10_000)?;
        // Blended LPD per point on both splits.
        for split in [Split::Test, Split::Validation] {
            let mut points: Vec<(String, usize)> = Vec::new();
            for r in &table.rows {
                if r.line == line && r.split == split && r.model == models[0] {
                    points.push((r.triangle_id.clone(), r.accident_year));
                }
            }
            for (id, year) in points {
                let terms: Result<Vec<f64>> = models
                    .iter()
                    .zip(&weights.weights)
                    .map(|(m, w)| {
                        table
                            .rows
                            .iter()
                            .find(|r| {
                                r.line == line
                                    && r.split == split
                                    && r.triangle_id == id
                                    && r.accident_year == year
                                    && &r.model == m
                            })
                            .map(|r| r.lpd + w.ln())
                            .ok_or_else(|| {
                                Error::validation(format!("model {m} missing row {id}@{year}"))
                            })
                    })
                    .collect();
                let blended = crate::math::log_sum_exp(&terms?);
                stacked.write_record([
                    line.as_str(),
                    id.as_str(),
                    &year.to_string(),
                    split.label(),
                    &blended.to_string(),
                ])?;
            }
        }
        all_weights.insert(
            line.clone(),
            models.iter().cloned().zip(weights.weights.iter().copied()).collect(),
        );
    }
    stacked.flush()?;
    out.record("stacked_scores.csv")?;
    std::fs::write(out.path("weights.json"), serde_json::to_string_pretty(&all_weights)?)?;
    out.record("weights.json")?;
    out.finish("stack", cfg)
}

// ---------------------------------------------------------------------------
// cashflow
// ---------------------------------------------------------------------------

/// Walk forecasted ultimates back through the fitted development factors to
/// per-lag paid-loss paths.
pub fn cmd_cashflow(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let develop_dir = cfg.output_dir.join("develop");
    let forecast_dir = cfg.output_dir.join("forecast");
    for (dir, dep) in [(&develop_dir, "develop"), (&forecast_dir, "forecast")] {
        if !dir.exists() {
            return Err(Error::validation(format!(
                "missing {dep} outputs at {}; run `{dep}` first",
                dir.display()
            )));
        }
    }
    let triangles = load_triangles(&cfg.input)?;
    let mut out = Outputs::new(cfg, "cashflow")?;

    for kind in cfg.models.kinds() {
        let forecast_csv = forecast_dir.join(format!("forecast_{}.csv", kind.label()));
        if !forecast_csv.exists() {
            return Err(Error::validation(format!(
                "missing forecast draws at {}",
                forecast_csv.display()
            )));
        }
        let losses = read_forecast_losses(&forecast_csv)?;

        let paths_name = format!("cashflows_{}.csv", kind.label());
        let summary_name = format!("cashflow_summary_{}.csv", kind.label());
        let mut paths_writer = csv::Writer::from_path(out.path(&paths_name))?;
        paths_writer.write_record(CashflowPaths::csv_header())?;
        let mut summary_writer = csv::Writer::from_path(out.path(&summary_name))?;
        summary_writer.write_record(crate::cashflow::CashflowSummary::csv_header())?;

        for t in &triangles {
            let m = t.n_dev_lags();
            let dev = cfg.dev_config_for(t.line(), m)?;
            let body = DrawMatrix::read_csv(develop_dir.join(format!("draws/dev_body_{}.csv", t.id())))?;
            let tail = DrawMatrix::read_csv(develop_dir.join(format!("draws/dev_tail_{}.csv", t.id())))?;
            let factors = prediction_factors(&body, &tail, m, dev.tau)?;
            for h in 1..=cfg.horizon {
                let year = t.n_accident_years() + h;
                let Some(ults) = losses.get(&(t.id().to_string(), year)) else {
                    continue;
                };
                let n = ults.len().min(factors.len());
                let premium = future_premiums(cfg, t)[h - 1];
                let flows =
                    walkback(t.id(), year, premium, &ults[..n], &factors[..n])?;
                flows.write_csv(&mut paths_writer)?;
                cashflow_summary(&flows, &cfg.quantiles)?.write_csv(&mut summary_writer)?;
            }
        }
        paths_writer.flush()?;
        summary_writer.flush()?;
        out.record(&paths_name)?;
        out.record(&summary_name)?;
    }
    out.finish("cashflow", cfg)
}

/// `(triangle_id, accident_year) -> loss draws in draw order` from a
/// forecast CSV.
fn read_forecast_losses(path: &Path) -> Result<BTreeMap<(String, usize), Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut map: BTreeMap<(String, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for record in reader.records() {
        let r = record?;
        let bad = || Error::validation(format!("cannot parse forecast row {r:?}"));
        let id = r[0].to_string();
        let year: usize = r[1].parse().map_err(|_| bad())?;
        let draw: usize = r[2].parse().map_err(|_| bad())?;
        let loss: f64 = r[4].parse().map_err(|_| bad())?;
        map.entry((id, year)).or_default().push((draw, loss));
    }
    Ok(map
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by_key(|(d, _)| *d);
            (k, v.into_iter().map(|(_, l)| l).collect())
        })
        .collect())
}

//! Cumulative-loss run-off triangles and loss ratios.
//!
//! A triangle holds cumulative losses indexed by accident year `i = 1..N`
//! (rows) and development lag `j = 1..M` (columns), plus one earned premium
//! per accident year. Observed cells either form the run-off shape
//! (`j <= N - i + 1`, capped at `M`) or a full square, in which case the
//! triangle is flagged so the backtest can mask it.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Cumulative-loss development triangle for one insurance program.
///
/// Immutable after construction; all accessors are 1-based to match the
/// accident-year / development-lag convention used throughout the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    id: String,
    line: String,
    /// `rows[i-1][j-1]` = cumulative loss for accident year `i` at lag `j`.
    rows: Vec<Vec<f64>>,
    /// Earned premium per accident year, length `N`.
    premiums: Vec<f64>,
    /// Original calendar accident years, metadata only.
    calendar_years: Vec<i64>,
    n_dev_lags: usize,
    full_square: bool,
}

impl Triangle {
    /// Build a triangle from per-accident-year rows of cumulative losses.
    ///
    /// Row `i` must hold lags `1..=len(i)` with no gaps; the overall shape
    /// must be either run-off (`len(i) = min(M, N - i + 1)`) or a full
    /// square (`len(i) = M` for all rows).
    pub fn new(
        id: impl Into<String>,
        line: impl Into<String>,
        rows: Vec<Vec<f64>>,
        premiums: Vec<f64>,
        calendar_years: Vec<i64>,
    ) -> Result<Self> {
        let id = id.into();
        let line = line.into();
        let n = rows.len();
        if n == 0 {
            return Err(Error::validation(format!("triangle {id}: no accident years")));
        }
        if premiums.len() != n {
            return Err(Error::validation(format!(
                "triangle {id}: {} premiums for {} accident years",
                premiums.len(),
                n
            )));
        }
        if calendar_years.len() != n {
            return Err(Error::validation(format!(
                "triangle {id}: {} calendar years for {} accident years",
                calendar_years.len(),
                n
            )));
        }
        let m = rows.iter().map(Vec::len).max().unwrap_or(0);
        if m == 0 {
            return Err(Error::validation(format!("triangle {id}: empty first row")));
        }
        for (idx, row) in rows.iter().enumerate() {
            let i = idx + 1;
            if row.is_empty() {
                return Err(Error::validation(format!(
                    "triangle {id}: accident year {i} has no observed cells"
                )));
            }
            for (jdx, &v) in row.iter().enumerate() {
                let j = jdx + 1;
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::validation(format!(
                        "triangle {id}: cell ({i},{j}) = {v} must be a positive loss"
                    )));
                }
            }
        }
        for (idx, &p) in premiums.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::validation(format!(
                    "triangle {id}: premium for accident year {} = {p} must be positive",
                    idx + 1
                )));
            }
        }
        let full_square = rows.iter().all(|r| r.len() == m);
        let runoff = rows
            .iter()
            .enumerate()
            .all(|(idx, r)| r.len() == m.min(n - idx));
        if !full_square && !runoff {
            return Err(Error::validation(format!(
                "triangle {id}: observed cells form neither a run-off shape nor a full square"
            )));
        }
        Ok(Self { id, line, rows, premiums, calendar_years, n_dev_lags: m, full_square })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn line(&self) -> &str {
        &self.line
    }

    /// Number of accident years `N`.
    pub fn n_accident_years(&self) -> usize {
        self.rows.len()
    }

    /// Number of development lags `M`.
    pub fn n_dev_lags(&self) -> usize {
        self.n_dev_lags
    }

    /// Whether every accident year is observed out to lag `M` (holdout present).
    pub fn is_full_square(&self) -> bool {
        self.full_square
    }

    /// Cumulative loss at accident year `i`, lag `j` (1-based); `None` if unobserved.
    pub fn cell(&self, i: usize, j: usize) -> Option<f64> {
        if i == 0 || j == 0 {
            return None;
        }
        self.rows.get(i - 1).and_then(|r| r.get(j - 1)).copied()
    }

    /// Observed losses for accident year `i`, lags `1..=latest_lag(i)`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i - 1]
    }

    /// Latest observed lag for accident year `i`.
    pub fn latest_lag(&self, i: usize) -> usize {
        self.rows[i - 1].len()
    }

    /// Earned premium for accident year `i` (1-based).
    pub fn premium(&self, i: usize) -> f64 {
        self.premiums[i - 1]
    }

    pub fn premiums(&self) -> &[f64] {
        &self.premiums
    }

    /// Original calendar year for accident-year index `i` (metadata only).
    pub fn calendar_year(&self, i: usize) -> i64 {
        self.calendar_years[i - 1]
    }

    pub fn n_cells(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Mask the triangle as of diagonal `as_of`: keeps cells with
    /// `i + j <= as_of + 1`. A full square with `as_of = M` becomes the
    /// standard run-off triangle; masking an already-masked triangle with
    /// the same diagonal is the identity.
    pub fn to_runoff(&self, as_of: usize) -> Result<Triangle> {
        if as_of == 0 || as_of > self.n_dev_lags {
            return Err(Error::validation(format!(
                "triangle {}: as_of = {as_of} out of range 1..={}",
                self.id, self.n_dev_lags
            )));
        }
        let n_keep = self.rows.len().min(as_of);
        let rows: Vec<Vec<f64>> = (0..n_keep)
            .map(|idx| {
                let keep = (as_of - idx).min(self.rows[idx].len());
                self.rows[idx][..keep].to_vec()
            })
            .collect();
        Triangle::new(
            self.id.clone(),
            self.line.clone(),
            rows,
            self.premiums[..n_keep].to_vec(),
            self.calendar_years[..n_keep].to_vec(),
        )
    }

    /// Elementwise loss ratios `r_ij = y_ij / p_i` over the same index set.
    pub fn loss_ratios(&self) -> LossRatioSeries {
        let values = self
            .rows
            .iter()
            .zip(&self.premiums)
            .map(|(row, &p)| row.iter().map(|&y| y / p).collect())
            .collect();
        LossRatioSeries { triangle_id: self.id.clone(), values }
    }
}

/// Loss ratios derived from a [`Triangle`]; same index domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRatioSeries {
    pub triangle_id: String,
    /// `values[i-1][j-1]` = `y_ij / p_i`.
    pub values: Vec<Vec<f64>>,
}

impl LossRatioSeries {
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(i - 1).and_then(|r| r.get(j - 1)).copied()
    }
}

// ---------------------------------------------------------------------------
// Long-CSV ingestion
// ---------------------------------------------------------------------------

const COLUMNS: [&str; 6] = [
    "triangle_id",
    "line",
    "accident_year",
    "dev_lag",
    "cumulative_loss",
    "earned_premium",
];

#[derive(Debug, Clone)]
struct RawCell {
    year: i64,
    lag: i64,
    loss: f64,
    premium: f64,
}

/// Load triangles from a long CSV (one row per observed cell).
///
/// Required columns: `triangle_id, line, accident_year, dev_lag,
/// cumulative_loss, earned_premium`. Accident years and lags are sorted and
/// normalized to 1-based contiguous indices; the calendar year is retained
/// as metadata. Duplicate cells, holes, non-positive values and premiums
/// that disagree across rows of the same accident year are rejected.
pub fn load_triangles(path: impl AsRef<Path>) -> Result<Vec<Triangle>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let mut col_idx = [0usize; 6];
    for (k, name) in COLUMNS.iter().enumerate() {
        match headers.iter().position(|h| h == *name) {
            Some(pos) => col_idx[k] = pos,
            None => {
                return Err(Error::validation(format!("missing column '{name}' in header")));
            }
        }
    }

    // Preserve first-appearance order of triangle ids.
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<String, (String, Vec<RawCell>)> = BTreeMap::new();
    for (row_num, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| record.get(col_idx[k]).unwrap_or("").trim().to_string();
        let id = field(0);
        let line = field(1);
        let parse_int = |k: usize, what: &str| -> Result<i64> {
            field(k).parse::<i64>().map_err(|_| {
                Error::validation(format!(
                    "row {}: cannot parse {what} '{}'",
                    row_num + 2,
                    field(k)
                ))
            })
        };
        let parse_num = |k: usize, what: &str| -> Result<f64> {
            field(k).parse::<f64>().map_err(|_| {
                Error::validation(format!(
                    "row {}: cannot parse {what} '{}'",
                    row_num + 2,
                    field(k)
                ))
            })
        };
        let cell = RawCell {
            year: parse_int(2, "accident_year")?,
            lag: parse_int(3, "dev_lag")?,
            loss: parse_num(4, "cumulative_loss")?,
            premium: parse_num(5, "earned_premium")?,
        };
        if !cell.loss.is_finite() || cell.loss <= 0.0 {
            return Err(Error::validation(format!(
                "triangle {id}: non-positive loss {} at accident year {}, lag {}",
                cell.loss, cell.year, cell.lag
            )));
        }
        if !cell.premium.is_finite() || cell.premium <= 0.0 {
            return Err(Error::validation(format!(
                "triangle {id}: non-positive premium {} at accident year {}, lag {}",
                cell.premium, cell.year, cell.lag
            )));
        }
        let entry = cells.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (line.clone(), Vec::new())
        });
        entry.1.push(cell);
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let (line, raw) = cells.remove(&id).expect("id collected above");
        out.push(assemble(&id, &line, raw)?);
    }
    Ok(out)
}

fn assemble(id: &str, line: &str, raw: Vec<RawCell>) -> Result<Triangle> {
    let mut years: Vec<i64> = raw.iter().map(|c| c.year).collect();
    years.sort_unstable();
    years.dedup();
    let mut lags: Vec<i64> = raw.iter().map(|c| c.lag).collect();
    lags.sort_unstable();
    lags.dedup();

    let n = years.len();
    let m = lags.len();
    let year_index = |y: i64| years.binary_search(&y).expect("year present") + 1;
    let lag_index = |l: i64| lags.binary_search(&l).expect("lag present") + 1;

    let mut grid: Vec<Vec<Option<f64>>> = vec![vec![None; m]; n];
    let mut premiums: Vec<Option<f64>> = vec![None; n];
    for cell in &raw {
        let i = year_index(cell.year);
        let j = lag_index(cell.lag);
        if grid[i - 1][j - 1].is_some() {
            return Err(Error::validation(format!(
                "triangle {id}: duplicate cell at accident year {}, lag {}",
                cell.year, cell.lag
            )));
        }
        grid[i - 1][j - 1] = Some(cell.loss);
        match premiums[i - 1] {
            None => premiums[i - 1] = Some(cell.premium),
            Some(p) if p == cell.premium => {}
            Some(p) => {
                return Err(Error::validation(format!(
                    "triangle {id}: inconsistent premium for accident year {} ({p} vs {})",
                    cell.year, cell.premium
                )));
            }
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (idx, row) in grid.into_iter().enumerate() {
        let observed = row.iter().take_while(|c| c.is_some()).count();
        if row.iter().skip(observed).any(Option::is_some) {
            return Err(Error::validation(format!(
                "triangle {id}: hole in accident year {} (lags must be contiguous from 1)",
                years[idx]
            )));
        }
        rows.push(row.into_iter().flatten().collect());
    }
    let premiums: Vec<f64> = premiums.into_iter().map(|p| p.expect("row present")).collect();
    Triangle::new(id, line, rows, premiums, years)
}

/// Serialize triangles back to the long-CSV schema (inverse of [`load_triangles`]).
pub fn write_triangles(path: impl AsRef<Path>, triangles: &[Triangle]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(COLUMNS)?;
    for t in triangles {
        for i in 1..=t.n_accident_years() {
            for j in 1..=t.latest_lag(i) {
                writer.write_record([
                    t.id(),
                    t.line(),
                    &t.calendar_year(i).to_string(),
                    &j.to_string(),
                    &t.cell(i, j).expect("cell in range").to_string(),
                    &t.premium(i).to_string(),
                ])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

//! Posterior (or prior) draw storage with sampler metadata.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampler bookkeeping carried alongside the draws.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SamplerMeta {
    pub seed: u64,
    /// Divergent transitions per chain (sampling phase).
    pub divergences: Vec<usize>,
    /// Adapted step size per chain.
    pub step_sizes: Vec<f64>,
    /// Mean acceptance statistic per chain (sampling phase).
    pub accept_rates: Vec<f64>,
}

impl SamplerMeta {
    pub fn total_divergences(&self) -> usize {
        self.divergences.iter().sum()
    }
}

/// Draws on the constrained scale: `chains x iterations x named quantities`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    names: Vec<String>,
    chains: usize,
    iters: usize,
    /// Chain-major storage: `values[(chain * iters + iter) * dim + q]`.
    values: Vec<f64>,
    meta: SamplerMeta,
}

impl DrawMatrix {
    pub fn from_parts(
        names: Vec<String>,
        chains: usize,
        iters: usize,
        values: Vec<f64>,
        meta: SamplerMeta,
    ) -> Result<Self> {
        if values.len() != chains * iters * names.len() {
            return Err(Error::validation(format!(
                "draw buffer has {} values, expected {} chains x {} iters x {} quantities",
                values.len(),
                chains,
                iters,
                names.len()
            )));
        }
        Ok(Self { names, chains, iters, values, meta })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn iters_per_chain(&self) -> usize {
        self.iters
    }

    /// Total draws `S = C * S_c`.
    pub fn total_draws(&self) -> usize {
        self.chains * self.iters
    }

    pub fn meta(&self) -> &SamplerMeta {
        &self.meta
    }

    pub fn index_of(&self, quantity: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == quantity)
            .ok_or_else(|| Error::validation(format!("unknown quantity '{quantity}'")))
    }

    pub fn value(&self, chain: usize, iter: usize, quantity_idx: usize) -> f64 {
        self.values[(chain * self.iters + iter) * self.names.len() + quantity_idx]
    }

    /// One full draw (all quantities) at `(chain, iter)`.
    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let dim = self.names.len();
        let start = (chain * self.iters + iter) * dim;
        &self.values[start..start + dim]
    }

    /// Flat draw index `0..total_draws()`, chain-major.
    pub fn draw_flat(&self, s: usize) -> &[f64] {
        self.draw(s / self.iters, s % self.iters)
    }

    /// All draws of one quantity, per chain.
    pub fn quantity_chains(&self, quantity: &str) -> Result<Vec<Vec<f64>>> {
        let q = self.index_of(quantity)?;
        Ok((0..self.chains)
            .map(|c| (0..self.iters).map(|s| self.value(c, s, q)).collect())
            .collect())
    }

    /// All draws of one quantity, flattened chain-major.
    pub fn quantity_draws(&self, quantity: &str) -> Result<Vec<f64>> {
        let q = self.index_of(quantity)?;
        let mut out = Vec::with_capacity(self.total_draws());
        for c in 0..self.chains {
            for s in 0..self.iters {
                out.push(self.value(c, s, q));
            }
        }
        Ok(out)
    }

    pub fn mean(&self, quantity: &str) -> Result<f64> {
        let draws = self.quantity_draws(quantity)?;
        Ok(draws.iter().sum::<f64>() / draws.len() as f64)
    }

    pub fn sd(&self, quantity: &str) -> Result<f64> {
        let draws = self.quantity_draws(quantity)?;
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var =
            draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws.len() - 1) as f64;
        Ok(var.sqrt())
    }

    /// Keep every `k`-th draw per chain (draws `k-1, 2k-1, ...`).
    pub fn thin(&self, k: usize) -> Result<DrawMatrix> {
        if k == 0 {
            return Err(Error::validation("thinning stride must be >= 1"));
        }
        let kept = self.iters / k;
        if kept == 0 {
            return Err(Error::validation(format!(
                "thinning stride {k} exceeds {} draws per chain",
                self.iters
            )));
        }
        let dim = self.names.len();
        let mut values = Vec::with_capacity(self.chains * kept * dim);
        for c in 0..self.chains {
            for s in 0..kept {
                values.extend_from_slice(self.draw(c, (s + 1) * k - 1));
            }
        }
        DrawMatrix::from_parts(self.names.clone(), self.chains, kept, values, self.meta.clone())
    }

    // -----------------------------------------------------------------------
    // Columnar CSV + JSON metadata sidecar
    // -----------------------------------------------------------------------

    /// Write `(chain, iter, name, value)` rows to `path` and the sampler
    /// metadata to `path` with an added `.meta.json` suffix.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["chain", "iter", "name", "value"])?;
        for c in 0..self.chains {
            for s in 0..self.iters {
                for (q, name) in self.names.iter().enumerate() {
                    writer.write_record([
                        &c.to_string(),
                        &s.to_string(),
                        name,
                        &self.value(c, s, q).to_string(),
                    ])?;
                }
            }
        }
        writer.flush()?;
        let meta_path = sidecar_path(path);
        std::fs::write(&meta_path, serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    /// Inverse of [`DrawMatrix::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>) -> Result<DrawMatrix> {
        let path = path.as_ref();
        let meta: SamplerMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let mut reader = csv::Reader::from_path(path)?;
        let mut names: Vec<String> = Vec::new();
        let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
        let mut chains = 0usize;
        let mut iters = 0usize;
        for record in reader.records() {
            let record = record?;
            let chain: usize = record[0].parse().map_err(|_| bad_row(&record))?;
            let iter: usize = record[1].parse().map_err(|_| bad_row(&record))?;
            let name = &record[2];
            let value: f64 = record[3].parse().map_err(|_| bad_row(&record))?;
            let q = match names.iter().position(|n| n == name) {
                Some(q) => q,
                None => {
                    names.push(name.to_string());
                    names.len() - 1
                }
            };
            chains = chains.max(chain + 1);
            iters = iters.max(iter + 1);
            rows.push((chain, iter, q, value));
        }
        let dim = names.len();
        if rows.len() != chains * iters * dim {
            return Err(Error::validation(format!(
                "draw CSV has {} rows, expected {}",
                rows.len(),
                chains * iters * dim
            )));
        }
        let mut values = vec![f64::NAN; chains * iters * dim];
        for (c, s, q, v) in rows {
            values[(c * iters + s) * dim + q] = v;
        }
        DrawMatrix::from_parts(names, chains, iters, values, meta)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta.json");
    std::path::PathBuf::from(os)
}

fn bad_row(record: &csv::StringRecord) -> Error {
    Error::validation(format!("cannot parse draw CSV row {record:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_matrix(chains: usize, iters: usize) -> DrawMatrix {
        let names = vec!["a".to_string(), "b".to_string()];
        let mut values = Vec::new();
        for c in 0..chains {
            for s in 0..iters {
                values.push((c * iters + s) as f64);
                values.push(-((c * iters + s) as f64));
            }
        }
        let meta = SamplerMeta {
            seed: 7,
            divergences: vec![0; chains],
            step_sizes: vec![0.5; chains],
            accept_rates: vec![0.9; chains],
        };
        DrawMatrix::from_parts(names, chains, iters, values, meta).unwrap()
    }

    #[test]
    fn thin_counts() {
        let d = toy_matrix(4, 1000);
        assert_eq!(d.total_draws(), 4000);
        let t = d.thin(10).unwrap();
        assert_eq!(t.total_draws(), 400);
        assert_eq!(t.iters_per_chain(), 100);
        // Every kept draw is the k-th of its block.
        assert_eq!(t.value(0, 0, 0), d.value(0, 9, 0));
        assert_eq!(t.value(2, 1, 0), d.value(2, 19, 0));
    }

    #[test]
    fn thin_identity() {
        let d = toy_matrix(2, 10);
        assert_eq!(d.thin(1).unwrap(), d);
    }

    #[test]
    fn thin_stride_too_large() {
        let d = toy_matrix(2, 10);
        assert!(d.thin(11).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let d = toy_matrix(2, 3);
        let dir = std::env::temp_dir().join(format!("runoff-draws-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.csv");
        d.write_csv(&path).unwrap();
        let back = DrawMatrix::read_csv(&path).unwrap();
        assert_eq!(d, back);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::open_uniform;
use crate::scalar::Real;

pub const DRAWS_FORMAT_VERSION: u32 = 1;

/// Provenance recorded next to a draw set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    /// Model simulations spent producing the draws.
    pub simulations: u64,
    /// Fraction of proposals discarded for leaving the prior support.
    pub leaked_fraction: Option<f64>,
    pub acceptance_rate: Option<f64>,
}

/// Hex SHA-256 of the JSON form of a configuration value.
pub fn config_hash<C: Serialize>(cfg: &C) -> String {
    let bytes = serde_json::to_vec(cfg).unwrap_or_default();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Posterior draws with normalized nonnegative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawSet<T: Real = f64> {
    names: Vec<String>,
    draws: Vec<Vec<T>>,
    weights: Vec<T>,
    meta: DrawMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    parameters: Vec<String>,
    draws: usize,
    #[serde(flatten)]
    meta: DrawMeta,
}

impl<T: Real> DrawSet<T> {
    /// Equally weighted draws.
    pub fn uniform(names: Vec<String>, draws: Vec<Vec<T>>, meta: DrawMeta) -> Result<Self> {
        let m = draws.len();
        let w = if m == 0 { vec![] } else { vec![T::one() / T::from_usize_lossy(m); m] };
        Self::weighted(names, draws, w, meta)
    }

    /// Weighted draws; the weights are normalized to sum to one.
    pub fn weighted(names: Vec<String>, draws: Vec<Vec<T>>, weights: Vec<T>, meta: DrawMeta) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InsufficientData("draw set is empty".into()));
        }
        if weights.len() != draws.len() {
            return Err(Error::DimensionMismatch { expected: draws.len(), got: weights.len() });
        }
        for d in &draws {
            if d.len() != names.len() {
                return Err(Error::DimensionMismatch { expected: names.len(), got: d.len() });
            }
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("draw".into()));
            }
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidParameter("draw weights must be finite and nonnegative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::InvalidParameter("draw weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(DrawSet { names, draws, weights, meta })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn draws(&self) -> &[Vec<T>] {
        &self.draws
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn meta(&self) -> &DrawMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut DrawMeta {
        &mut self.meta
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim()];
        for (d, &w) in self.draws.iter().zip(&self.weights) {
            for (acc, &v) in m.iter_mut().zip(d) {
                *acc += w * v;
            }
        }
        m
    }

    /// Kish effective sample size `1 / sum w^2`.
    pub fn ess(&self) -> T {
        T::one() / self.weights.iter().map(|&w| w * w).sum::<T>()
    }

    /// `m` equally weighted points by systematic resampling; the draws
    /// themselves when they are already equally weighted and `m == len`.
    pub fn equally_weighted<R: RngCore + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<Vec<T>> {
        if self.is_uniform() && m == self.len() {
            return self.draws.clone();
        }
        systematic_resample(&self.weights, m, rng).into_iter().map(|i| self.draws[i].clone()).collect()
    }

    /// Writes `<stem>.csv` (one row per draw, parameter columns then `weight`)
    /// and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push("weight");
        w.write_record(&header)?;
        for (d, wt) in self.draws.iter().zip(&self.weights) {
            let mut rec: Vec<String> = d.iter().map(|v| format!("{:e}", v.to_f64_lossy())).collect();
            rec.push(format!("{:e}", wt.to_f64_lossy()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        let side = Sidecar { format_version: DRAWS_FORMAT_VERSION, parameters: self.names.clone(), draws: self.len(), meta: self.meta.clone() };
        fs::write(&json_path, serde_json::to_string_pretty(&side)?)?;
        Ok((csv_path, json_path))
    }

    /// Reads a draw set written by [`DrawSet::write`]; the sidecar is optional.
    pub fn read(csv_path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(csv_path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let weight_col = header.iter().position(|h| h == "weight");
        let names: Vec<String> = header.iter().filter(|h| *h != "weight").cloned().collect();
        let mut draws = Vec::new();
        let mut weights = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut row = Vec::with_capacity(names.len());
            let mut wt = T::one();
            for (i, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Config(format!("bad number {field:?} in {}", csv_path.display())))?;
                if Some(i) == weight_col {
                    wt = T::lit(v);
                } else {
                    row.push(T::lit(v));
                }
            }
            draws.push(row);
            weights.push(wt);
        }
        let side_path = csv_path.with_extension("json");
        let meta = if side_path.exists() {
            let side: Sidecar = serde_json::from_str(&fs::read_to_string(&side_path)?)?;
            if side.format_version != DRAWS_FORMAT_VERSION {
                return Err(Error::Config(format!("unsupported draw sidecar version {}", side.format_version)));
            }
            side.meta
        } else {
            DrawMeta::default()
        };
        Self::weighted(names, draws, weights, meta)
    }
}

/// Indices of `m` systematic-resampling picks from normalized `weights`.
pub fn systematic_resample<T: Real, R: RngCore + ?Sized>(weights: &[T], m: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().map(|w| w.to_f64_lossy()).sum();
    let step = total / m as f64;
    let mut u = open_uniform(rng) * step;
    let mut out = Vec::with_capacity(m);
    let mut acc = 0.0;
    let mut i = 0;
    for w in weights {
        acc += w.to_f64_lossy();
        while out.len() < m && u < acc {
            out.push(i);
            u += step;
        }
        i += 1;
    }
    while out.len() < m {
        out.push(weights.len() - 1);
    }
    out
}

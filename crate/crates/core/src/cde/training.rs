use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which block is modelled given which.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `q(theta | S)`: posterior estimation.
    ParamsGivenSummaries,
    /// `q(S | theta)`: likelihood estimation.
    SummariesGivenParams,
}

/// Per-coordinate z-scoring of the target and condition blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Standardization<T: Real = f64> {
    pub target_mean: Vec<T>,
    pub target_sd: Vec<T>,
    pub cond_mean: Vec<T>,
    pub cond_sd: Vec<T>,
}

fn column_stats<T: Real>(rows: &[Vec<T>], d: usize) -> (Vec<T>, Vec<T>) {
    let n = T::from_usize_lossy(rows.len());
    let mut mean = vec![T::zero(); d];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![T::zero(); d];
    for r in rows {
        for j in 0..d {
            let e = r[j] - mean[j];
            var[j] += e * e;
        }
    }
    let sd = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            // constant columns are left unscaled
            if s > T::zero() && s.is_finite() { s } else { T::one() }
        })
        .collect();
    (mean, sd)
}

impl<T: Real> Standardization<T> {
    pub fn identity(target_dim: usize, cond_dim: usize) -> Self {
        Standardization {
            target_mean: vec![T::zero(); target_dim],
            target_sd: vec![T::one(); target_dim],
            cond_mean: vec![T::zero(); cond_dim],
            cond_sd: vec![T::one(); cond_dim],
        }
    }

    pub fn target_dim(&self) -> usize {
        self.target_mean.len()
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_mean.len()
    }

    pub fn standardize_target(&self, x: &[T], out: &mut [T]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.target_mean[i]) / self.target_sd[i];
        }
    }

    pub fn standardize_cond(&self, c: &[T], out: &mut [T]) {
        for i in 0..c.len() {
            out[i] = (c[i] - self.cond_mean[i]) / self.cond_sd[i];
        }
    }

    pub fn destandardize_target(&self, z: &[T], out: &mut [T]) {
        for i in 0..z.len() {
            out[i] = z[i] * self.target_sd[i] + self.target_mean[i];
        }
    }

    /// `sum(log sd)` of the target block: the log-Jacobian of standardization.
    pub fn log_jacobian(&self) -> T {
        self.target_sd.iter().map(|s| s.ln()).sum()
    }
}

/// Simulated pairs `(theta_i, S_i)` with importance weights `K(theta_i)`.
#[derive(Clone, Debug)]
pub struct TrainingSet<T: Real = f64> {
    thetas: Vec<Vec<T>>,
    summaries: Vec<Vec<T>>,
    weights: Vec<T>,
    direction: Direction,
    standardization: Standardization<T>,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(thetas: Vec<Vec<T>>, summaries: Vec<Vec<T>>, direction: Direction) -> Result<Self> {
        let n = thetas.len();
        if n == 0 {
            return Err(Error::InsufficientData("training set is empty".into()));
        }
        if summaries.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: summaries.len() });
        }
        let dt = thetas[0].len();
        let ds = summaries[0].len();
        for (t, s) in thetas.iter().zip(&summaries) {
            if t.len() != dt {
                return Err(Error::DimensionMismatch { expected: dt, got: t.len() });
            }
            if s.len() != ds {
                return Err(Error::DimensionMismatch { expected: ds, got: s.len() });
            }
            if t.iter().chain(s).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("training pair".into()));
            }
        }
        let (tm, tsd) = column_stats(&thetas, dt);
        let (sm, ssd) = column_stats(&summaries, ds);
        let standardization = match direction {
            Direction::ParamsGivenSummaries => Standardization { target_mean: tm, target_sd: tsd, cond_mean: sm, cond_sd: ssd },
            Direction::SummariesGivenParams => Standardization { target_mean: sm, target_sd: ssd, cond_mean: tm, cond_sd: tsd },
        };
        Ok(TrainingSet { weights: vec![T::one(); n], thetas, summaries, direction, standardization })
    }

    /// Replaces the importance weights with `K(theta_i)`; every weight must be positive.
    pub fn with_importance<F: Fn(&[T]) -> T>(mut self, k: F) -> Result<Self> {
        let w: Vec<T> = self.thetas.iter().map(|t| k(t)).collect();
        if let Some(bad) = w.iter().find(|w| !(**w > T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("importance weight {bad} is not positive")));
        }
        self.weights = w;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn thetas(&self) -> &[Vec<T>] {
        &self.thetas
    }

    pub fn summaries(&self) -> &[Vec<T>] {
        &self.summaries
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn standardization(&self) -> &Standardization<T> {
        &self.standardization
    }

    pub fn targets(&self) -> &[Vec<T>] {
        match self.direction {
            Direction::ParamsGivenSummaries => &self.thetas,
            Direction::SummariesGivenParams => &self.summaries,
        }
    }

    pub fn conditions(&self) -> &[Vec<T>] {
        match self.direction {
            Direction::ParamsGivenSummaries => &self.summaries,
            Direction::SummariesGivenParams => &self.thetas,
        }
    }

    pub fn target_dim(&self) -> usize {
        self.standardization.target_dim()
    }

    pub fn cond_dim(&self) -> usize {
        self.standardization.cond_dim()
    }
}

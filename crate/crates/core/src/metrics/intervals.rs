use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::DrawSet;
use crate::scalar::Real;

pub const DEFAULT_LEVELS: [f64; 3] = [0.80, 0.90, 0.95];

/// Weighted quantile with linear interpolation between the midpoints of each
/// point's cumulative-weight step. With unit weights on `1..=100` the 5% and
/// 95% quantiles are 5.5 and 95.5.
pub fn weighted_quantile<T: Real>(values: &[T], weights: &[T], prob: f64) -> T {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let total: f64 = weights.iter().map(|w| w.to_f64_lossy()).sum();
    let mut cum = 0.0;
    let mut prev: Option<(f64, T)> = None;
    for &i in &order {
        let w = weights[i].to_f64_lossy() / total;
        if w == 0.0 {
            continue;
        }
        let mid = cum + 0.5 * w;
        cum += w;
        if prob <= mid {
            return match prev {
                None => values[i],
                Some((pm, pv)) => {
                    let f = T::lit((prob - pm) / (mid - pm));
                    pv + f * (values[i] - pv)
                }
            };
        }
        prev = Some((mid, values[i]));
    }
    prev.map(|p| p.1).unwrap_or_else(T::nan)
}

/// Equal-tailed intervals `(q((1-level)/2), q(1-(1-level)/2))`, one per parameter.
pub fn credible_interval<T: Real>(draws: &DrawSet<T>, level: f64) -> Result<Vec<(T, T)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("credible level {level} outside (0, 1)")));
    }
    let tail = 0.5 * (1.0 - level);
    Ok((0..draws.dim())
        .map(|j| {
            let col = draws.column(j);
            (weighted_quantile(&col, draws.weights(), tail), weighted_quantile(&col, draws.weights(), 1.0 - tail))
        })
        .collect())
}

/// Weighted posterior mean minus the truth, per parameter.
pub fn posterior_mean_bias<T: Real>(draws: &DrawSet<T>, truth: &[T]) -> Result<Vec<T>> {
    if truth.len() != draws.dim() {
        return Err(Error::DimensionMismatch { expected: draws.dim(), got: truth.len() });
    }
    Ok(draws.mean().into_iter().zip(truth).map(|(m, &t)| m - t).collect())
}

/// Interval hits across replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub levels: Vec<f64>,
    pub parameters: Vec<String>,
    pub replications: usize,
    /// `hits[level][parameter][replication]`
    pub hits: Vec<Vec<Vec<bool>>>,
}

impl CoverageReport {
    pub fn hit_count(&self, level: usize, parameter: usize) -> usize {
        self.hits[level][parameter].iter().filter(|&&h| h).count()
    }

    pub fn fraction(&self, level: usize, parameter: usize) -> f64 {
        self.hit_count(level, parameter) as f64 / self.replications as f64
    }
}

/// `intervals[rep][level][parameter]` checked against `truth`; intervals are closed.
pub fn coverage<T: Real>(levels: &[f64], parameters: &[String], intervals: &[Vec<Vec<(T, T)>>], truth: &[T]) -> Result<CoverageReport> {
    if intervals.is_empty() {
        return Err(Error::InsufficientData("coverage needs at least one replication".into()));
    }
    let mut hits = vec![vec![Vec::with_capacity(intervals.len()); parameters.len()]; levels.len()];
    for rep in intervals {
        if rep.len() != levels.len() {
            return Err(Error::DimensionMismatch { expected: levels.len(), got: rep.len() });
        }
        for (l, per_param) in rep.iter().enumerate() {
            if per_param.len() != parameters.len() || truth.len() != parameters.len() {
                return Err(Error::DimensionMismatch { expected: parameters.len(), got: per_param.len() });
            }
            for (p, &(lo, hi)) in per_param.iter().enumerate() {
                hits[l][p].push(lo <= truth[p] && truth[p] <= hi);
            }
        }
    }
    Ok(CoverageReport { levels: levels.to_vec(), parameters: parameters.to_vec(), replications: intervals.len(), hits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::DrawMeta;

    fn one_to_hundred() -> DrawSet<f64> {
        DrawSet::uniform(vec!["x".into()], (1..=100).map(|i| vec![i as f64]).collect(), DrawMeta::default()).unwrap()
    }

    #[test]
    fn hand_evaluated_quantiles() {
        let ci = credible_interval(&one_to_hundred(), 0.90).unwrap();
        assert!((ci[0].0 - 5.5).abs() < 1e-12 && (ci[0].1 - 95.5).abs() < 1e-12, "{ci:?}");
        let ci80 = credible_interval(&one_to_hundred(), 0.80).unwrap();
        assert!((ci80[0].0 - 10.5).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_points_are_ignored() {
        let a: f64 = weighted_quantile(&[1.0, 5.0, 3.0], &[1.0, 0.0, 1.0], 0.4);
        let b = weighted_quantile(&[1.0, 3.0], &[1.0, 1.0], 0.4);
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn constant_draws_give_degenerate_intervals() {
        let ds = DrawSet::uniform(vec!["x".into()], vec![vec![4.2f64]; 10], DrawMeta::default()).unwrap();
        for level in DEFAULT_LEVELS {
            assert_eq!(credible_interval(&ds, level).unwrap()[0], (4.2, 4.2));
        }
    }

    #[test]
    fn coverage_counts() {
        let names = vec!["x".to_string()];
        let always: Vec<_> = (0..7).map(|_| vec![vec![(0.0, 1.0)]; 3]).collect();
        let r = coverage(&DEFAULT_LEVELS, &names, &always, &[0.5]).unwrap();
        assert_eq!(r.fraction(1, 0), 1.0);
        let r = coverage(&DEFAULT_LEVELS, &names, &always, &[2.0]).unwrap();
        assert_eq!(r.fraction(2, 0), 0.0);
        assert!(coverage::<f64>(&DEFAULT_LEVELS, &names, &[], &[0.0]).is_err());
    }

    #[test]
    fn bias_of_shifted_draws() {
        let ds = DrawSet::uniform(vec!["x".into()], vec![vec![1.0f64], vec![3.0]], DrawMeta::default()).unwrap();
        assert_eq!(posterior_mean_bias(&ds, &[1.0]).unwrap(), vec![1.0]);
    }
}

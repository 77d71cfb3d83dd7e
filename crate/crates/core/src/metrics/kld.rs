use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use crate::error::{Error, Result};
use crate::inference::DrawSet;
use crate::linalg::{cholesky, lower_mul, mean_cov};
use crate::rng::std_normal;
use crate::scalar::Real;

/// A k-nearest-neighbour estimate of `KL(P || Q)` in nats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KLDEstimate {
    pub value: f64,
    pub m_p: usize,
    pub m_q: usize,
    pub k: usize,
}

/// k-NN divergence estimate from samples `p` of P and `q` of Q:
/// `(d/M_p) sum_i log(s_k(x_i)/r_k(x_i)) + log(M_q/(M_p - 1))`, where `r_k` is
/// the distance to the k-th neighbour among the other P points and `s_k` among
/// the Q points. Exact duplicates are treated as a single point. The estimate
/// is not clamped at zero.
pub fn knn_kld<T: Real>(p: &[Vec<T>], q: &[Vec<T>], k: usize) -> Result<KLDEstimate> {
    if k == 0 {
        return Err(Error::InvalidParameter("neighbour order must be at least 1".into()));
    }
    if p.len() < k + 1 || q.len() < k + 1 {
        return Err(Error::InsufficientData(format!("kNN divergence needs at least {} points per sample", k + 1)));
    }
    let d = p[0].len();
    if let Some(bad) = p.iter().chain(q).find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let tp = KdTree::new(p);
    let tq = KdTree::new(q);
    let logs: Vec<Option<f64>> = (0..p.len())
        .into_par_iter()
        .map(|i| {
            let r = tp.kth_nonzero_distance(&p[i], k, Some(i))?;
            let s = tq.kth_nonzero_distance(&p[i], k, None)?;
            Some((s.to_f64_lossy() / r.to_f64_lossy()).ln())
        })
        .collect();
    let mut sum = 0.0;
    for l in logs {
        sum += l.ok_or_else(|| Error::InsufficientData("too few distinct points for the neighbour order".into()))?;
    }
    let (mp, mq) = (p.len() as f64, q.len() as f64);
    let value = d as f64 / mp * sum + (mq / (mp - 1.0)).ln();
    if !value.is_finite() {
        return Err(Error::NonFinite("kNN divergence".into()));
    }
    Ok(KLDEstimate { value, m_p: p.len(), m_q: q.len(), k })
}

/// Divergence from the draws to a Gaussian with the draws' mean and covariance,
/// estimated against a fresh Gaussian sample of the same size.
pub fn gaussianity_kld<T: Real, R: RngCore + ?Sized>(draws: &DrawSet<T>, k: usize, rng: &mut R) -> Result<KLDEstimate> {
    if draws.len() < 100 {
        return Err(Error::InsufficientData(format!("gaussianity check needs 100 draws, got {}", draws.len())));
    }
    let pts = draws.equally_weighted(draws.len(), rng);
    let d = draws.dim();
    let (mean, cov) = mean_cov(&pts, None);
    let l = cholesky(&cov, d)?;
    let mut z = vec![T::zero(); d];
    let mut y = vec![T::zero(); d];
    let gauss: Vec<Vec<T>> = (0..pts.len())
        .map(|_| {
            z.iter_mut().for_each(|v| *v = T::lit(std_normal(rng)));
            lower_mul(&l, d, &z, &mut y);
            y.iter().zip(&mean).map(|(&a, &m)| a + m).collect()
        })
        .collect();
    knn_kld(&pts, &gauss, k)
}

use crate::error::{Error, Result};
use crate::models::{gk_quantile_derivative, Prior};
use crate::rng::norm_ppf;
use crate::scalar::Real;

/// Asymptotic mean and covariance of the MA(2) autocovariance summaries
/// `(delta_0, delta_1, delta_2)` at `theta`, with unit noise variance. The
/// covariance is divided by `n`.
pub fn ma2_moments<T: Real>(theta: &[T], n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if theta.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: theta.len() });
    }
    if !Prior::<T>::Ma2Triangle.contains(theta) {
        return Err(Error::InvalidParameter(format!("({}, {}) is outside the MA(2) triangle", theta[0], theta[1])));
    }
    let (t1, t2) = (theta[0], theta[1]);
    let delta = [T::one() + t1 * t1 + t2 * t2, t1 * (T::one() + t2), t2];
    let dh = |h: i64| -> T {
        let a = h.unsigned_abs() as usize;
        if a <= 2 { delta[a] } else { T::zero() }
    };
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut cov = vec![T::zero(); 9];
    for k1 in 0..3i64 {
        for k2 in 0..3i64 {
            let mut s = T::zero();
            for h in -2..=2i64 {
                s += dh(h) * dh(h + k1 - k2);
            }
            for i in -2..=2i64 {
                s += dh(k1 + i) * dh(k2 - i);
            }
            cov[(k1 * 3 + k2) as usize] = s * inv_n;
        }
    }
    Ok((delta.to_vec(), cov))
}

/// Asymptotic mean and covariance of the sample quantiles at `probs` for a
/// g-and-k sample of size `n`: `Cov = (min(p_i, p_j) - p_i p_j) / (n f_i f_j)`
/// with the density `f = phi(z) / Q'(z)` at `z = Phi^{-1}(p)`.
pub fn gk_order_stat_moments<T: Real>(theta: &[T], probs: &[f64], n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if theta.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: theta.len() });
    }
    if probs.windows(2).any(|w| w[1] <= w[0]) || probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidParameter("quantile levels must increase strictly inside (0, 1)".into()));
    }
    let m = probs.len();
    let mut mean = Vec::with_capacity(m);
    let mut dens = Vec::with_capacity(m);
    let (a, b, g, k) = (theta[0], theta[1], theta[2], theta[3]);
    for &p in probs {
        let z = T::lit(norm_ppf(p));
        let dq = gk_quantile_derivative(z, theta)?;
        if !(dq > T::zero()) {
            return Err(Error::InvalidGkRegion(p, dq.to_f64_lossy()));
        }
        let skew = T::one() + T::lit(crate::models::GK_C) * (g * z * T::lit(0.5)).tanh();
        mean.push(a + b * skew * (T::one() + z * z).powf(k) * z);
        let phi = (-T::lit(0.5) * z * z).exp() / T::TAU().sqrt();
        dens.push(phi / dq);
    }
    let nn = T::from_usize_lossy(n);
    let mut cov = vec![T::zero(); m * m];
    for i in 0..m {
        for j in 0..m {
            let (pi, pj) = (T::lit(probs[i]), T::lit(probs[j]));
            cov[i * m + j] = (pi.min(pj) - pi * pj) / (nn * dens[i] * dens[j]);
        }
    }
    Ok((mean, cov))
}

//! Small dense linear algebra on row-major `Vec<T>` matrices.
//!
//! Dimensions here never exceed the summary dimension (15 at most), so plain
//! loops beat pulling in a matrix library and keep everything generic over [`Real`].

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower Cholesky factor of a symmetric positive definite `d x d` matrix.
pub fn cholesky<T: Real>(a: &[T], d: usize) -> Result<Vec<T>> {
    if a.len() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, got: a.len() });
    }
    let mut l = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite(format!("pivot {i} = {s}")));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// Cholesky after adding `rel * trace / d` to the diagonal.
pub fn cholesky_jittered<T: Real>(a: &[T], d: usize, rel: T) -> Result<Vec<T>> {
    let trace: T = (0..d).map(|i| a[i * d + i]).sum();
    let jitter = rel * trace / T::from_usize_lossy(d);
    let mut b = a.to_vec();
    for i in 0..d {
        b[i * d + i] += jitter;
    }
    cholesky(&b, d)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_solve<T: Real>(l: &[T], d: usize, b: &mut [T]) {
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
}

/// Solves `L^T x = b` in place for lower-triangular `L`.
pub fn back_solve_transpose<T: Real>(l: &[T], d: usize, b: &mut [T]) {
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in (i + 1)..d {
            s -= l[k * d + i] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
}

/// `y = L z` for lower-triangular `L`.
pub fn lower_mul<T: Real>(l: &[T], d: usize, z: &[T], out: &mut [T]) {
    for i in 0..d {
        let mut s = T::zero();
        for k in 0..=i {
            s += l[i * d + k] * z[k];
        }
        out[i] = s;
    }
}

/// Multivariate normal log-density given the lower Cholesky factor of the covariance.
pub fn mvn_logpdf_chol<T: Real>(x: &[T], mean: &[T], chol: &[T]) -> T {
    let d = x.len();
    let mut r: Vec<T> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    forward_solve(chol, d, &mut r);
    let quad: T = r.iter().map(|&v| v * v).sum();
    let log_det: T = (0..d).map(|i| chol[i * d + i].ln()).sum();
    -T::lit(0.5) * quad - log_det - T::lit(0.5 * d as f64) * (T::TAU()).ln()
}

/// Column means and (n-1)-normalized covariance of row samples, with optional weights.
pub fn mean_cov<T: Real>(rows: &[Vec<T>], weights: Option<&[T]>) -> (Vec<T>, Vec<T>) {
    let d = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    let uniform = T::one() / T::from_usize_lossy(n.max(1));
    let w = |i: usize| weights.map_or(uniform, |w| w[i]);
    let wsum: T = (0..n).map(w).sum();
    let mut mean = vec![T::zero(); d];
    for (i, r) in rows.iter().enumerate() {
        for j in 0..d {
            mean[j] += w(i) * r[j];
        }
    }
    for m in &mut mean {
        *m /= wsum;
    }
    let mut cov = vec![T::zero(); d * d];
    let mut w2 = T::zero();
    for (i, r) in rows.iter().enumerate() {
        let wi = w(i) / wsum;
        w2 += wi * wi;
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in 0..=a {
                cov[a * d + b] += wi * da * (r[b] - mean[b]);
            }
        }
    }
    // unbiased for uniform weights; reliability-weight correction otherwise
    let denom = T::one() - w2;
    for a in 0..d {
        for b in 0..=a {
            let v = if denom > T::zero() { cov[a * d + b] / denom } else { cov[a * d + b] };
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    (mean, cov)
}

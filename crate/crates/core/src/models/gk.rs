use rand::RngCore;

use super::{ParamVector, RawSeries, SummaryId, SummaryVector};
use crate::error::{Error, Result};
use crate::rng::std_normal;
use crate::scalar::Real;

/// Fixed overall-asymmetry constant `c`.
pub const GK_C: f64 = 0.8;

fn check_theta<T: Real>(theta: &[T]) -> Result<()> {
    if theta.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: theta.len() });
    }
    if !(theta[1] > T::zero()) {
        return Err(Error::InvalidParameter(format!("g-and-k scale B must be positive, got {}", theta[1])));
    }
    Ok(())
}

#[inline]
fn quantile_unchecked<T: Real>(z: T, theta: &[T]) -> T {
    let (a, b, g, k) = (theta[0], theta[1], theta[2], theta[3]);
    let half = T::lit(0.5);
    let skew = T::one() + T::lit(GK_C) * (g * z * half).tanh();
    a + b * skew * (T::one() + z * z).powf(k) * z
}

/// g-and-k quantile function at standard-normal quantile `z` for `theta = (A, B, g, k)`.
pub fn gk_quantile<T: Real>(z: T, theta: &ParamVector<T>) -> Result<T> {
    check_theta(theta.values())?;
    Ok(quantile_unchecked(z, theta.values()))
}

/// Analytic derivative `dQ/dz`.
pub fn gk_quantile_derivative<T: Real>(z: T, theta: &[T]) -> Result<T> {
    check_theta(theta)?;
    let (b, g, k) = (theta[1], theta[2], theta[3]);
    let half = T::lit(0.5);
    let c = T::lit(GK_C);
    let th = (g * z * half).tanh();
    let skew = T::one() + c * th;
    let dskew = c * g * half * (T::one() - th * th);
    let base = T::one() + z * z;
    let shape = base.powf(k) * z;
    let dshape = base.powf(k - T::one()) * (base + T::lit(2.0) * k * z * z);
    Ok(b * (dskew * shape + skew * dshape))
}

/// Draws `n` i.i.d. g-and-k observations.
pub fn gk_simulate<T: Real, R: RngCore + ?Sized>(theta: &ParamVector<T>, n: usize, rng: &mut R) -> Result<RawSeries<T>> {
    let t = theta.values();
    check_theta(t)?;
    let observations = (0..n).map(|_| quantile_unchecked(T::lit(std_normal(rng)), t)).collect();
    Ok(RawSeries { observations })
}

/// Probability levels of a quantile summary: `j/8` for octiles, `j/16` for hexadeciles.
pub fn summary_probs(summary: SummaryId) -> Result<Vec<f64>> {
    let m = match summary {
        SummaryId::Octiles => 8,
        SummaryId::Hexadeciles => 16,
        other => return Err(Error::UnknownId { kind: "g-and-k summary", value: other.as_str().into() }),
    };
    Ok((1..m).map(|j| j as f64 / m as f64).collect())
}

pub fn octile_probs() -> Vec<f64> {
    (1..8).map(|j| j as f64 / 8.0).collect()
}

/// Linear-interpolation sample quantile (type 7) of sorted data.
fn sorted_quantile(sorted: &[f64], p: f64) -> (usize, f64) {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    (lo, h - lo as f64)
}

/// Simulates `n` g-and-k draws and returns their octiles or hexadeciles.
pub fn gk_simulate_summaries<T: Real, R: RngCore + ?Sized>(
    theta: &ParamVector<T>,
    n: usize,
    summary: SummaryId,
    rng: &mut R,
) -> Result<SummaryVector<T>> {
    let probs = summary_probs(summary)?;
    if n < 16 {
        return Err(Error::InvalidParameter(format!("g-and-k quantile summaries need n >= 16, got {n}")));
    }
    let t = theta.values();
    check_theta(t)?;
    let t64: Vec<f64> = t.iter().map(|v| v.to_f64_lossy()).collect();
    // Q is increasing in z on the admissible region, so order statistics of the
    // normals map to order statistics of the sample.
    let mut z: Vec<f64> = (0..n).map(|_| std_normal(rng)).collect();
    z.sort_unstable_by(f64::total_cmp);
    let values = probs
        .iter()
        .map(|&p| {
            let (lo, frac) = sorted_quantile(&z, p);
            let a = quantile_unchecked(z[lo], &t64);
            let b = if frac > 0.0 { quantile_unchecked(z[lo + 1], &t64) } else { a };
            T::lit(a + frac * (b - a))
        })
        .collect();
    SummaryVector::new(values)
}

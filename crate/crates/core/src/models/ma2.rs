use rand::RngCore;

use super::{ParamVector, RawSeries, SummaryVector};
use crate::error::{Error, Result};
use crate::rng::std_normal;
use crate::scalar::Real;

/// Simulates `y_t = e_t + t1 e_{t-1} + t2 e_{t-2}`, `t = 1..n`, with `e_{-1}`, `e_0`
/// drawn fresh so the series is stationary from the first observation.
pub fn ma2_simulate<T: Real, R: RngCore + ?Sized>(theta: &ParamVector<T>, n: usize, rng: &mut R) -> Result<RawSeries<T>> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("MA(2) needs n >= 3, got {n}")));
    }
    let t = theta.values();
    if t.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: t.len() });
    }
    let (t1, t2) = (t[0].to_f64_lossy(), t[1].to_f64_lossy());
    let mut lag2 = std_normal(rng);
    let mut lag1 = std_normal(rng);
    let mut observations = Vec::with_capacity(n);
    for _ in 0..n {
        let e = std_normal(rng);
        observations.push(T::lit(e + t1 * lag1 + t2 * lag2));
        lag2 = lag1;
        lag1 = e;
    }
    Ok(RawSeries { observations })
}

/// `(d0, d1, d2)`: the lag-0/1/2 sample autocovariances about zero, each divided by `n`.
pub fn ma2_summaries<T: Real>(y: &RawSeries<T>) -> Result<SummaryVector<T>> {
    let y = &y.observations;
    let n = y.len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!("autocovariance summaries need n >= 3, got {n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MA(2) series contains a non-finite value".into()));
    }
    let nt = T::from_usize_lossy(n);
    let d0: T = y.iter().map(|&v| v * v).sum::<T>() / nt;
    let d1: T = y.windows(2).map(|w| w[1] * w[0]).sum::<T>() / nt;
    let d2: T = y.windows(3).map(|w| w[2] * w[0]).sum::<T>() / nt;
    SummaryVector::new(vec![d0, d1, d2])
}

/// Large-sample mean of the autocovariance summaries for unit noise variance.
pub fn ma2_mean<T: Real>(theta: &[T]) -> [T; 3] {
    let (t1, t2) = (theta[0], theta[1]);
    [T::one() + t1 * t1 + t2 * t2, t1 * (T::one() + t2), t2]
}

use rand::RngCore;

use super::SummaryVector;
use crate::error::{Error, Result};
use crate::rng::std_normal;
use crate::scalar::Real;

/// Mean of `n` draws from `N(theta, 1)`.
pub fn toy_simulate_summaries<T: Real, R: RngCore + ?Sized>(theta: T, n: usize, rng: &mut R) -> Result<SummaryVector<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("toy model needs n >= 1".into()));
    }
    let t = theta.to_f64_lossy();
    let s = (0..n).map(|_| t + std_normal(rng)).sum::<f64>() / n as f64;
    SummaryVector::new(vec![T::lit(s)])
}

/// Exact posterior `(mean, variance)` under the `N(0, 1)` prior: `(nS/(n+1), 1/(n+1))`.
pub fn toy_exact_posterior<T: Real>(s: T, n: usize) -> (T, T) {
    let nt = T::from_usize_lossy(n);
    (nt * s / (nt + T::one()), T::one() / (nt + T::one()))
}

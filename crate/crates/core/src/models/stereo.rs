//! Stereological extremes: elliptical inclusions observed through plane sections.
//!
//! Inclusions arrive as a Poisson process with rate `lambda` per unit window;
//! a window of `n` observations has scale `w = n / 100`. Each inclusion has a
//! largest principal diameter `V3 = nu0 + GPD(sigma, xi)` and smaller diameters
//! `V1 = U1 V3`, `V2 = U2 V3`. The section plane hits an inclusion with
//! probability `V1 / V3` (proportional to its extent normal to the plane); the
//! plane's offset `Z ~ U(-1, 1)` along that axis yields an observed diameter
//! `V3 * sqrt(1 - Z^2)`. Only diameters above `nu0` are recorded.

use rand::RngCore;
use rand_distr::{Distribution, Poisson};

use super::{ParamVector, RawSeries, SummaryVector};
use crate::error::{Error, Result};
use crate::rng::open_uniform;
use crate::scalar::Real;

/// Recording threshold `nu0` on diameters.
pub const STEREO_THRESHOLD: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct StereoSample<T: Real = f64> {
    /// Poisson count of inclusions in the window, before sectioning and thresholding.
    pub latent_count: usize,
    /// Retained section diameters, all above the threshold.
    pub diameters: RawSeries<T>,
}

/// Generalized Pareto excess by inversion: `sigma/xi * (U^-xi - 1)`, exponential at `xi = 0`.
pub(crate) fn gpd_excess(sigma: f64, xi: f64, u: f64) -> f64 {
    if xi.abs() < 1e-12 {
        -sigma * u.ln()
    } else {
        sigma / xi * (u.powf(-xi) - 1.0)
    }
}

fn check_theta(t: &[f64]) -> Result<()> {
    if t.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: t.len() });
    }
    let (lambda, sigma, xi) = (t[0], t[1], t[2]);
    if !(lambda > 0.0) || !(sigma > 0.0) || !xi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "stereo needs lambda > 0, sigma > 0, finite xi; got ({lambda}, {sigma}, {xi})"
        )));
    }
    Ok(())
}

pub fn stereo_simulate<T: Real, R: RngCore + ?Sized>(theta: &ParamVector<T>, n: usize, rng: &mut R) -> Result<StereoSample<T>> {
    let t: Vec<f64> = theta.values().iter().map(|v| v.to_f64_lossy()).collect();
    check_theta(&t)?;
    if n == 0 {
        return Err(Error::InvalidParameter("stereo window needs n >= 1".into()));
    }
    let (lambda, sigma, xi) = (t[0], t[1], t[2]);
    let rate = lambda * n as f64 / 100.0;
    let poisson = Poisson::new(rate).map_err(|e| Error::InvalidParameter(format!("Poisson rate {rate}: {e}")))?;
    let latent_count = poisson.sample(rng) as usize;
    let mut observations = Vec::new();
    for _ in 0..latent_count {
        let v3 = STEREO_THRESHOLD + gpd_excess(sigma, xi, open_uniform(rng));
        let u1 = open_uniform(rng);
        let _u2 = open_uniform(rng); // V2 never exceeds V3, so it does not enter the section diameter
        let hit = open_uniform(rng) < u1;
        let z = 2.0 * open_uniform(rng) - 1.0;
        if !hit {
            continue;
        }
        let d = v3 * (1.0 - z * z).sqrt();
        if d > STEREO_THRESHOLD {
            observations.push(T::lit(d));
        }
    }
    Ok(StereoSample { latent_count, diameters: RawSeries { observations } })
}

/// `(count, log mean, log min, log max)` of retained diameters; an empty window
/// yields `(0, log nu0, log nu0, log nu0)`.
pub fn stereo_summaries<T: Real>(diameters: &RawSeries<T>) -> Result<SummaryVector<T>> {
    let d = &diameters.observations;
    if d.is_empty() {
        let s = T::lit(STEREO_THRESHOLD.ln());
        return SummaryVector::new(vec![T::zero(), s, s, s]);
    }
    let xs: Vec<f64> = d.iter().map(|v| v.to_f64_lossy()).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    SummaryVector::new(vec![T::from_usize_lossy(xs.len()), T::lit(mean.ln()), T::lit(min.ln()), T::lit(max.ln())])
}

pub fn stereo_simulate_summaries<T: Real, R: RngCore + ?Sized>(theta: &ParamVector<T>, n: usize, rng: &mut R) -> Result<SummaryVector<T>> {
    stereo_summaries(&stereo_simulate(theta, n, rng)?.diameters)
}

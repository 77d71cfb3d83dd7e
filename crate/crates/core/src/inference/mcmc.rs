use serde::{Deserialize, Serialize};

use super::draws::{DrawMeta, DrawSet};
use crate::error::{Error, Result};
use crate::rng::{open_uniform, std_normal, Stream};
use crate::scalar::Real;

/// Random-walk Metropolis settings. `chain_length` counts every iteration,
/// burn-in included; one draw is kept every `thin` iterations after burn-in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MCMCConfig {
    pub chain_length: usize,
    pub burn_in_fraction: f64,
    /// Initial proposal sd as a multiple of the caller's per-coordinate scale.
    pub initial_scale: f64,
    pub target_acceptance: f64,
    pub thin: usize,
}

impl Default for MCMCConfig {
    fn default() -> Self {
        MCMCConfig { chain_length: 500_000, burn_in_fraction: 0.2, initial_scale: 0.1, target_acceptance: 0.234, thin: 40 }
    }
}

impl MCMCConfig {
    pub fn burn_in(&self) -> usize {
        (self.chain_length as f64 * self.burn_in_fraction).floor() as usize
    }

    /// Number of draws the chain returns.
    pub fn kept(&self) -> usize {
        let after = self.chain_length.saturating_sub(self.burn_in());
        after.div_ceil(self.thin.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config(format!("burn-in fraction {} outside [0, 1)", self.burn_in_fraction)));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config(format!("target acceptance {} outside (0, 1)", self.target_acceptance)));
        }
        if !(self.initial_scale > 0.0) || self.thin == 0 {
            return Err(Error::Config("initial scale and thinning must be positive".into()));
        }
        if self.kept() == 0 {
            return Err(Error::Config("chain keeps no draws after burn-in".into()));
        }
        Ok(())
    }
}

/// Metropolis acceptance probability for a symmetric proposal.
pub fn metropolis_accept_prob<T: Real>(log_current: T, log_proposed: T) -> T {
    if log_proposed.is_nan() || log_proposed == T::neg_infinity() {
        return T::zero();
    }
    let r = log_proposed - log_current;
    if r >= T::zero() { T::one() } else { r.exp() }
}

/// Gaussian random-walk Metropolis on `log_target` from `init`.
///
/// The proposal is diagonal. During burn-in its global scale follows a
/// Robbins-Monro recursion toward `cfg.target_acceptance` and, once a few
/// hundred states are available, its per-coordinate shape follows the running
/// variance of the chain. Both are frozen after burn-in, so the retained draws
/// come from a time-homogeneous kernel. `scales` sets the initial proposal sd
/// together with `cfg.initial_scale`.
pub fn rwm_sample<T: Real, F>(log_target: F, init: &[T], scales: &[T], names: Vec<String>, cfg: &MCMCConfig, stream: Stream) -> Result<DrawSet<T>>
where
    F: Fn(&[T]) -> T,
{
    cfg.validate()?;
    let d = init.len();
    if scales.len() != d || names.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: scales.len() });
    }
    let mut x = init.to_vec();
    let mut lp = log_target(&x);
    if !lp.is_finite() {
        return Err(Error::NonFinite(format!("log target at the initial point is {lp}")));
    }
    let mut rng = stream.rng();
    let burn = cfg.burn_in();
    let warm = (burn / 4).min(500);
    let target = cfg.target_acceptance;
    let mut base: Vec<f64> = scales.iter().map(|s| s.to_f64_lossy() * cfg.initial_scale).collect();
    let mut log_s = 0.0f64;
    // Welford accumulators over burn-in states
    let mut count = 0.0f64;
    let mut mean = vec![0.0f64; d];
    let mut m2 = vec![0.0f64; d];
    let mut draws = Vec::with_capacity(cfg.kept());
    let mut accepted_after = 0usize;
    let mut prop = vec![T::zero(); d];
    for it in 0..cfg.chain_length {
        let s = log_s.exp();
        for j in 0..d {
            prop[j] = x[j] + T::lit(s * base[j] * std_normal(&mut rng));
        }
        let lq = log_target(&prop);
        let a = metropolis_accept_prob(lp, lq).to_f64_lossy();
        let accept = open_uniform(&mut rng) < a;
        if accept {
            x.copy_from_slice(&prop);
            lp = lq;
        }
        if it < burn {
            count += 1.0;
            for j in 0..d {
                let v = x[j].to_f64_lossy();
                let delta = v - mean[j];
                mean[j] += delta / count;
                m2[j] += delta * (v - mean[j]);
            }
            if it + 1 == warm && warm > 0 {
                // switch to the chain's own shape, keeping the current spread
                let shaped: Vec<f64> = m2.iter().map(|m| (m / count).sqrt()).collect();
                if shaped.iter().all(|v| *v > 0.0 && v.is_finite()) {
                    base = shaped.iter().map(|v| v * 2.38 / (d as f64).sqrt()).collect();
                    log_s = 0.0;
                }
            } else if it + 1 > warm && it % 50 == 0 {
                let shaped: Vec<f64> = m2.iter().map(|m| (m / count).sqrt()).collect();
                if shaped.iter().all(|v| *v > 0.0 && v.is_finite()) {
                    base = shaped.iter().map(|v| v * 2.38 / (d as f64).sqrt()).collect();
                }
            }
            let gain = 1.0 / ((it + 1) as f64).powf(0.6);
            log_s = (log_s + gain * (a - target)).clamp(-30.0, 30.0);
        } else {
            if accept {
                accepted_after += 1;
            }
            if (it - burn).is_multiple_of(cfg.thin) {
                draws.push(x.clone());
            }
        }
    }
    let rate = accepted_after as f64 / (cfg.chain_length - burn) as f64;
    let meta = DrawMeta { method: "rwm".into(), seed: stream.seed(), acceptance_rate: Some(rate), ..DrawMeta::default() };
    DrawSet::uniform(names, draws, meta)
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::draws::{systematic_resample, DrawMeta, DrawSet};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, forward_solve, lower_mul, mean_cov};
use crate::models::{ModelSpec, SummaryVector};
use crate::rng::{std_normal, Stream};
use crate::scalar::Real;

/// Adaptive ABC-SMC settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ABCSMCConfig {
    pub particles: usize,
    /// Next tolerance is this quantile of the current population's distances.
    pub quantile: f64,
    pub min_tolerance: f64,
    pub max_simulations: u64,
    /// Stop once a round shrinks the tolerance by less than this fraction.
    pub min_improvement: f64,
    /// Rounds after the prior round; zero returns the prior population.
    pub max_rounds: usize,
}

impl Default for ABCSMCConfig {
    fn default() -> Self {
        ABCSMCConfig { particles: 1000, quantile: 0.5, min_tolerance: 0.0, max_simulations: 1_000_000, min_improvement: 0.01, max_rounds: 50 }
    }
}

impl ABCSMCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 100 {
            return Err(Error::Config(format!("ABC-SMC needs at least 100 particles, got {}", self.particles)));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::Config(format!("tolerance quantile {} outside (0, 1)", self.quantile)));
        }
        if self.max_simulations < self.particles as u64 {
            return Err(Error::Config("simulation budget is smaller than one population".into()));
        }
        Ok(())
    }
}

/// Result of [`abc_smc`].
#[derive(Clone, Debug)]
pub struct AbcRun<T: Real = f64> {
    pub draws: DrawSet<T>,
    pub total_simulations: u64,
    /// Tolerance of each completed round after the prior round.
    pub tolerances: Vec<f64>,
}

fn distance<T: Real>(s: &[T], obs: &[T], scale: &[T]) -> f64 {
    s.iter().zip(obs).zip(scale).map(|((&a, &b), &c)| ((a - b) / c).to_f64_lossy().powi(2)).sum::<f64>().sqrt()
}

fn quantile(mut xs: Vec<f64>, q: f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    xs[lo] + (pos - lo as f64) * (xs[hi] - xs[lo])
}

/// Population ABC-SMC with adaptive tolerances, a Gaussian perturbation kernel
/// with twice the weighted population covariance, and importance weights
/// `p(theta) / sum_j w_j K(theta | theta_j)`. Distances are Euclidean on
/// summaries scaled by their prior-predictive sd from the first round.
pub fn abc_smc<T: Real>(spec: &ModelSpec<T>, s_obs: &SummaryVector<T>, cfg: &ABCSMCConfig, stream: Stream) -> Result<AbcRun<T>> {
    cfg.validate()?;
    spec.validate()?;
    let obs = s_obs.as_slice();
    if obs.len() != spec.summary_dim() {
        return Err(Error::DimensionMismatch { expected: spec.summary_dim(), got: obs.len() });
    }
    let n = cfg.particles;
    let d = spec.param_dim();
    let prior = &spec.prior;

    // round 0: the prior predictive
    let round0 = stream.child(0);
    let init: Result<Vec<(Vec<T>, Vec<T>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = round0.child(i as u64).rng();
            let th = prior.sample(&mut rng)?;
            let s = spec.simulate(&th, &mut rng)?.into_vec();
            Ok((th, s))
        })
        .collect();
    let (mut thetas, sims): (Vec<Vec<T>>, Vec<Vec<T>>) = init?.into_iter().unzip();
    let (_, scov) = mean_cov(&sims, None);
    let sd_dim = obs.len();
    let scale: Vec<T> = (0..sd_dim)
        .map(|j| {
            let v = scov[j * sd_dim + j].sqrt();
            if v > T::zero() && v.is_finite() { v } else { T::one() }
        })
        .collect();
    let mut dists: Vec<f64> = sims.iter().map(|s| distance(s, obs, &scale)).collect();
    let mut weights = vec![T::one() / T::from_usize_lossy(n); n];
    let mut total = n as u64;
    let mut tolerances = Vec::new();
    let mut eps_prev = f64::INFINITY;

    for round in 1..=cfg.max_rounds {
        let eps = quantile(dists.clone(), cfg.quantile);
        if eps_prev.is_finite() && (eps_prev - eps) / eps_prev < cfg.min_improvement {
            break;
        }
        if !(eps < eps_prev) {
            break;
        }
        let (_, cov) = mean_cov(&thetas, Some(&weights));
        let kcov: Vec<T> = cov.iter().map(|&c| c * T::lit(2.0)).collect();
        let l = cholesky_jittered(&kcov, d, T::lit(1e-10))?;
        let stage = stream.child(round as u64);
        let mut next: Vec<(Vec<T>, f64)> = Vec::with_capacity(n);
        let mut slot = 0u64;
        let mut spent = 0u64;
        let mut acc_rate = 0.5f64;
        let mut exhausted = false;
        while next.len() < n {
            let budget_left = cfg.max_simulations.saturating_sub(total + spent);
            if budget_left == 0 {
                exhausted = true;
                break;
            }
            let need = n - next.len();
            let batch = ((need as f64 / acc_rate.max(0.01)).ceil() as u64).clamp(64, 50_000).min(budget_left);
            let ancestors = {
                let mut rng = stage.child(u64::MAX - slot).rng();
                systematic_resample(&weights, batch as usize, &mut rng)
            };
            let results: Vec<Option<(Vec<T>, f64)>> = (0..batch)
                .into_par_iter()
                .map(|b| {
                    let mut rng = stage.child(slot + b).rng();
                    let z: Vec<T> = (0..d).map(|_| T::lit(std_normal(&mut rng))).collect();
                    let mut step = vec![T::zero(); d];
                    lower_mul(&l, d, &z, &mut step);
                    let th: Vec<T> = thetas[ancestors[b as usize]].iter().zip(&step).map(|(&a, &s)| a + s).collect();
                    if !prior.contains(&th) {
                        return None;
                    }
                    let s = spec.simulate(&th, &mut rng).ok()?;
                    let dist = distance(s.as_slice(), obs, &scale);
                    (dist <= eps).then_some((th, dist))
                })
                .collect();
            slot += batch;
            spent += batch;
            let hits = results.iter().filter(|r| r.is_some()).count();
            acc_rate = 0.5 * acc_rate + 0.5 * (hits as f64 / batch as f64);
            for r in results.into_iter().flatten() {
                if next.len() < n {
                    next.push(r);
                }
            }
        }
        total += spent;
        if exhausted {
            break;
        }
        // importance weights against the perturbed previous population
        let new_w: Vec<T> = next
            .par_iter()
            .map(|(th, _)| {
                let mut denom = 0.0f64;
                let mut r = vec![T::zero(); d];
                for (tj, &wj) in thetas.iter().zip(&weights) {
                    for a in 0..d {
                        r[a] = th[a] - tj[a];
                    }
                    forward_solve(&l, d, &mut r);
                    let q: f64 = r.iter().map(|v| v.to_f64_lossy().powi(2)).sum();
                    denom += wj.to_f64_lossy() * (-0.5 * q).exp();
                }
                T::lit(prior.log_density(th).to_f64_lossy().exp() / denom)
            })
            .collect();
        let wsum: T = new_w.iter().copied().sum();
        if !(wsum > T::zero()) || !wsum.is_finite() {
            return Err(Error::ParticleDegeneracy { ess: 0.0, min: 0.05 * n as f64 });
        }
        weights = new_w.into_iter().map(|w| w / wsum).collect();
        let ess = 1.0 / weights.iter().map(|w| w.to_f64_lossy().powi(2)).sum::<f64>();
        if ess < 0.05 * n as f64 {
            return Err(Error::ParticleDegeneracy { ess, min: 0.05 * n as f64 });
        }
        let (th, ds): (Vec<Vec<T>>, Vec<f64>) = next.into_iter().unzip();
        thetas = th;
        dists = ds;
        tolerances.push(eps);
        eps_prev = eps;
        if eps <= cfg.min_tolerance || total >= cfg.max_simulations {
            break;
        }
    }
    let names = spec.param_names().iter().map(|s| s.to_string()).collect();
    let meta = DrawMeta { method: "abc-smc".into(), seed: stream.seed(), simulations: total, ..DrawMeta::default() };
    Ok(AbcRun { draws: DrawSet::weighted(names, thetas, weights, meta)?, total_simulations: total, tolerances })
}

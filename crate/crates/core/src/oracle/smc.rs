use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{metropolis_accept_prob, systematic_resample, DrawMeta, DrawSet};
use crate::linalg::{cholesky_jittered, lower_mul, mean_cov};
use crate::models::Prior;
use crate::rng::{open_uniform, std_normal, Stream};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemperingConfig {
    pub particles: usize,
    /// Each new temperature keeps this fraction of the particles as effective sample size.
    pub ess_fraction: f64,
    /// Metropolis moves per particle after each resampling.
    pub moves: usize,
    /// Extra moves at the final temperature, to spread out resampled copies.
    pub final_moves: usize,
    pub max_stages: usize,
}

impl Default for TemperingConfig {
    fn default() -> Self {
        TemperingConfig { particles: 4000, ess_fraction: 0.5, moves: 5, final_moves: 20, max_stages: 1000 }
    }
}

/// The temperature ladder a tempered run actually used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperingSchedule {
    pub particles: usize,
    pub ess_threshold: f64,
    /// `0 = t_0 < t_1 < ... < t_T = 1`
    pub temperatures: Vec<f64>,
    /// Effective sample size of the reweighted particles at each new temperature.
    pub ess: Vec<f64>,
    pub acceptance: Vec<f64>,
}

fn ess_of(log_lik: &[f64], delta: f64) -> f64 {
    let max = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut s, mut s2) = (0.0, 0.0);
    for &l in log_lik {
        let w = if l == f64::NEG_INFINITY { 0.0 } else { (delta * (l - max)).exp() };
        s += w;
        s2 += w * w;
    }
    if s2 > 0.0 { s * s / s2 } else { 0.0 }
}

/// Anneals from the prior to `prior * exp(log_likelihood)` through adaptively
/// chosen temperatures, with systematic resampling and random-walk Metropolis
/// rejuvenation at each stage. Returns equally weighted draws at temperature one.
pub fn tempered_smc<T: Real, F>(log_likelihood: F, prior: &Prior<T>, names: Vec<String>, cfg: &TemperingConfig, stream: Stream) -> Result<(DrawSet<T>, TemperingSchedule)>
where
    F: Fn(&[T]) -> T + Sync,
{
    if cfg.particles < 2 || !(cfg.ess_fraction > 0.0 && cfg.ess_fraction < 1.0) || cfg.moves == 0 {
        return Err(Error::Config("tempering needs >= 2 particles, an ESS fraction in (0, 1) and at least one move".into()));
    }
    prior.validate()?;
    let n = cfg.particles;
    let d = prior.dim();
    let threshold = cfg.ess_fraction * n as f64;
    let init: Result<Vec<Vec<T>>> = (0..n).map(|i| prior.sample(&mut stream.child(0).child(i as u64).rng())).collect();
    let mut x = init?;
    let mut ll: Vec<f64> = x.par_iter().map(|t| log_likelihood(t).to_f64_lossy()).collect();
    let mut t = 0.0f64;
    let mut schedule = TemperingSchedule { particles: n, ess_threshold: threshold, temperatures: vec![0.0], ess: vec![], acceptance: vec![] };
    let mut scale = 2.38 / (d as f64).sqrt();
    let mut stage = 0u64;
    while t < 1.0 {
        stage += 1;
        if stage as usize > cfg.max_stages {
            return Err(Error::TemperingStalled(cfg.max_stages));
        }
        let room = 1.0 - t;
        let delta = if ess_of(&ll, room) >= threshold {
            room
        } else {
            let (mut lo, mut hi) = (0.0, room);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if ess_of(&ll, mid) >= threshold { lo = mid } else { hi = mid }
            }
            lo.max(f64::EPSILON * room.max(1e-300))
        };
        let t_new = if delta >= room { 1.0 } else { t + delta };
        if t_new <= t {
            return Err(Error::TemperingStalled(stage as usize));
        }
        schedule.ess.push(ess_of(&ll, t_new - t));
        let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = ll.iter().map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { ((t_new - t) * (l - max)).exp() }).collect();
        t = t_new;
        schedule.temperatures.push(t);

        let st = stream.child(stage);
        let idx = systematic_resample(&w, n, &mut st.child(u64::MAX).rng());
        x = idx.iter().map(|&i| x[i].clone()).collect();
        ll = idx.iter().map(|&i| ll[i]).collect();

        let (_, cov) = mean_cov(&x, None);
        let l = cholesky_jittered(&cov, d, T::lit(1e-8))?;
        let steps = if t >= 1.0 { cfg.moves + cfg.final_moves } else { cfg.moves };
        let temp = t;
        let s = scale;
        let moved: Vec<(Vec<T>, f64, usize)> = x
            .par_iter()
            .zip(ll.par_iter())
            .enumerate()
            .map(|(i, (x0, &l0))| {
                let mut rng = st.child(i as u64).rng();
                let mut cur = x0.clone();
                let mut cur_ll = l0;
                let mut cur_lp = prior.log_density(&cur).to_f64_lossy() + temp * cur_ll;
                let mut acc = 0;
                let mut z = vec![T::zero(); d];
                let mut step = vec![T::zero(); d];
                for _ in 0..steps {
                    z.iter_mut().for_each(|v| *v = T::lit(s * std_normal(&mut rng)));
                    lower_mul(&l, d, &z, &mut step);
                    let prop: Vec<T> = cur.iter().zip(&step).map(|(&a, &b)| a + b).collect();
                    let u = open_uniform(&mut rng);
                    if !prior.contains(&prop) {
                        continue;
                    }
                    let p_ll = log_likelihood(&prop).to_f64_lossy();
                    let p_lp = prior.log_density(&prop).to_f64_lossy() + temp * p_ll;
                    if u < metropolis_accept_prob(cur_lp, p_lp) {
                        cur = prop;
                        cur_ll = p_ll;
                        cur_lp = p_lp;
                        acc += 1;
                    }
                }
                (cur, cur_ll, acc)
            })
            .collect();
        let accepted: usize = moved.iter().map(|m| m.2).sum();
        let rate = accepted as f64 / (n * steps) as f64;
        schedule.acceptance.push(rate);
        scale = (scale * (2.0 * (rate - 0.234)).exp()).clamp(1e-3, 10.0);
        x = Vec::with_capacity(n);
        ll = Vec::with_capacity(n);
        for (xi, li, _) in moved {
            x.push(xi);
            ll.push(li);
        }
    }
    let meta = DrawMeta { method: "oracle-smc".into(), seed: stream.seed(), ..DrawMeta::default() };
    Ok((DrawSet::uniform(names, x, meta)?, schedule))
}

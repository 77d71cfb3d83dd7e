use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mixture::{ConditionalMixture, Layout};
use super::training::TrainingSet;
use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;
use crate::rng::{open_uniform, Stream};
use crate::scalar::Real;

/// Optimizer settings for [`fit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub sigma_floor: f64,
    pub kmeans_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 300,
            patience: 20,
            validation_fraction: 0.1,
            sigma_floor: 1e-4,
            kmeans_iterations: 10,
        }
    }
}

/// What happened during one call to [`fit`]. Losses are mean weighted negative
/// log-likelihoods in original coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub final_train_loss: f64,
    pub train_trace: Vec<f64>,
    pub validation_trace: Vec<f64>,
    pub initial_validation_loss: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub early_stopped: bool,
    pub seed: u64,
    /// Loss of the single-Gaussian least-squares fit over the whole set.
    pub baseline_loss: f64,
    /// The trained mixture lost to the baseline, which was returned instead.
    pub used_baseline: bool,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
    b1: T,
    b2: T,
    eps: T,
}

impl<T: Real> Adam<T> {
    fn new(n: usize, cfg: &FitConfig) -> Self {
        Adam {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            lr: T::lit(cfg.learning_rate),
            b1: T::lit(cfg.beta1),
            b2: T::lit(cfg.beta2),
            eps: T::lit(cfg.epsilon),
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let c1 = T::one() - self.b1.powi(self.t);
        let c2 = T::one() - self.b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.b1 * self.m[i] + (T::one() - self.b1) * grad[i];
            self.v[i] = self.b2 * self.v[i] + (T::one() - self.b2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by a few Lloyd sweeps.
fn kmeans<T: Real, R: Rng>(points: &[&Vec<T>], k: usize, iters: usize, rng: &mut R) -> Vec<Vec<T>> {
    let n = points.len();
    let mut centers: Vec<Vec<T>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0]).to_f64_lossy()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = open_uniform(rng) * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                acc += v;
                if acc >= target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c).to_f64_lossy());
        }
        centers.push(c);
    }
    let d = centers[0].len();
    for _ in 0..iters {
        let mut sums = vec![vec![T::zero(); d]; k];
        let mut counts = vec![0usize; k];
        for p in points {
            let j = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).partial_cmp(&sq_dist(p, &centers[b])).unwrap())
                .unwrap();
            counts[j] += 1;
            for t in 0..d {
                sums[j][t] += p[t];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let c = T::from_usize_lossy(counts[j]);
                centers[j] = sums[j].iter().map(|&s| s / c).collect();
            }
        }
    }
    centers
}

/// Weighted least-squares Gaussian regression of target on condition, placed in
/// every component with equal gates.
fn baseline<T: Real>(train: &TrainingSet<T>, x: &[Vec<T>], c: &[Vec<T>], layout: Layout, floor: T) -> Result<ConditionalMixture<T>> {
    let (d, m) = (layout.target_dim, layout.cond_dim);
    let p = m + 1;
    let w = train.weights();
    let mut xtx = vec![T::zero(); p * p];
    let mut xty = vec![T::zero(); p * d];
    let design = |ci: &[T], a: usize| if a == m { T::one() } else { ci[a] };
    for i in 0..x.len() {
        for a in 0..p {
            let fa = w[i] * design(&c[i], a);
            for b in 0..p {
                xtx[a * p + b] += fa * design(&c[i], b);
            }
            for t in 0..d {
                xty[a * d + t] += fa * x[i][t];
            }
        }
    }
    let l = cholesky_jittered(&xtx, p, T::lit(1e-10))?;
    // coef[a][t], solved column by column
    let mut coef = vec![T::zero(); p * d];
    for t in 0..d {
        let mut col: Vec<T> = (0..p).map(|a| xty[a * d + t]).collect();
        crate::linalg::forward_solve(&l, p, &mut col);
        crate::linalg::back_solve_transpose(&l, p, &mut col);
        for a in 0..p {
            coef[a * d + t] = col[a];
        }
    }
    let wsum: T = w.iter().copied().sum();
    let mut cov = vec![T::zero(); d * d];
    let mut r = vec![T::zero(); d];
    for i in 0..x.len() {
        for t in 0..d {
            let mut pred = T::zero();
            for a in 0..p {
                pred += design(&c[i], a) * coef[a * d + t];
            }
            r[t] = x[i][t] - pred;
        }
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += w[i] * r[a] * r[b] / wsum;
            }
        }
    }
    for a in 0..d {
        let min = floor * floor * T::lit(4.0);
        if cov[a * d + a] < min {
            cov[a * d + a] = min;
        }
    }
    let mut chol = cholesky_jittered(&cov, d, T::lit(1e-10))?;
    for a in 0..d {
        if chol[a * d + a] <= floor {
            chol[a * d + a] = floor * T::lit(2.0);
        }
    }
    let k = layout.k;
    let mut mean_w = Vec::with_capacity(k * d * m);
    let mut mean_b = Vec::with_capacity(k * d);
    for _ in 0..k {
        for t in 0..d {
            for a in 0..m {
                mean_w.push(coef[a * d + t]);
            }
        }
        for t in 0..d {
            mean_b.push(coef[m * d + t]);
        }
    }
    ConditionalMixture::from_parts(
        train.direction(),
        train.standardization().clone(),
        vec![T::zero(); k * m],
        vec![T::zero(); k],
        mean_w,
        mean_b,
        vec![chol; k],
        floor,
    )
}

fn nll<T: Real>(model: &ConditionalMixture<T>, x: &[Vec<T>], c: &[Vec<T>], w: &[T], idx: &[usize]) -> T {
    let xs: Vec<Vec<T>> = idx.iter().map(|&i| x[i].clone()).collect();
    let cs: Vec<Vec<T>> = idx.iter().map(|&i| c[i].clone()).collect();
    let ws: Vec<T> = idx.iter().map(|&i| w[i]).collect();
    weighted_nll(model, &xs, &cs, &ws)
}

fn weighted_nll<T: Real>(model: &ConditionalMixture<T>, x: &[Vec<T>], c: &[Vec<T>], w: &[T]) -> T {
    let prep = model.prepare();
    let mut s = super::mixture::Scratch::new(&model.layout());
    let wsum: T = w.iter().copied().sum();
    let mut loss = T::zero();
    for i in 0..x.len() {
        loss -= w[i] * model.eval_std(&prep, &x[i], &c[i], &mut s, None);
    }
    loss / wsum
}

/// Trains a `k`-component mixture on `train` by minimizing the weighted negative
/// log-likelihood with Adam and early stopping on a held-out split.
pub fn fit<T: Real>(train: &TrainingSet<T>, k: usize, cfg: &FitConfig, stream: Stream) -> Result<(ConditionalMixture<T>, FitReport)> {
    if k == 0 {
        return Err(Error::InvalidParameter("component count must be at least 1".into()));
    }
    let n = train.len();
    if n < 10 * k {
        return Err(Error::InsufficientData(format!("{n} training pairs for {k} components; need at least {}", 10 * k)));
    }
    if !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) || cfg.batch_size == 0 {
        return Err(Error::Config("validation fraction must lie in (0, 1) and batch size be positive".into()));
    }
    let mut rng = stream.rng();
    let std = train.standardization();
    let (d, m) = (train.target_dim(), train.cond_dim());
    let mut x = vec![vec![T::zero(); d]; n];
    let mut c = vec![vec![T::zero(); m]; n];
    for i in 0..n {
        std.standardize_target(&train.targets()[i], &mut x[i]);
        std.standardize_cond(&train.conditions()[i], &mut c[i]);
    }
    let w = train.weights();
    let jac = std.log_jacobian().to_f64_lossy();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let val_idx = order[..n_val].to_vec();
    let mut tr_idx = order[n_val..].to_vec();
    let all_idx: Vec<usize> = (0..n).collect();

    let layout = Layout { k, target_dim: d, cond_dim: m };
    let floor = T::lit(cfg.sigma_floor);
    let base = baseline(train, &x, &c, layout, floor)?;
    let baseline_loss = nll(&base, &x, &c, w, &all_idx);

    // Initial model: k-means++ intercepts, zero slopes, uniform gates, unit scales.
    let pts: Vec<&Vec<T>> = tr_idx.iter().take(5000).map(|&i| &x[i]).collect();
    let centers = kmeans(&pts, k, cfg.kmeans_iterations, &mut rng);
    let mut eye = vec![T::zero(); d * d];
    for a in 0..d {
        eye[a * d + a] = T::one();
    }
    let mut model = ConditionalMixture::from_parts(
        train.direction(),
        std.clone(),
        vec![T::zero(); k * m],
        vec![T::zero(); k],
        vec![T::zero(); k * d * m],
        centers.concat(),
        vec![eye; k],
        floor,
    )?;

    let mut adam = Adam::new(layout.n_params(), cfg);
    let initial_val = nll(&model, &x, &c, w, &val_idx).to_f64_lossy() + jac;
    let mut best = (initial_val, model.params().to_vec(), 0usize);
    let mut train_trace = Vec::new();
    let mut val_trace = Vec::new();
    let mut since_best = 0;
    let mut early_stopped = false;
    let mut bx = Vec::with_capacity(cfg.batch_size);
    let mut bc = Vec::with_capacity(cfg.batch_size);
    let mut bw = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.max_epochs {
        tr_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        for chunk in tr_idx.chunks(cfg.batch_size) {
            bx.clear();
            bc.clear();
            bw.clear();
            for &i in chunk {
                bx.push(x[i].clone());
                bc.push(c[i].clone());
                bw.push(w[i]);
            }
            let (loss, grad) = model.weighted_nll_grad(&bx, &bc, &bw);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, detail: format!("batch loss {loss}") });
            }
            let bws: f64 = bw.iter().map(|v| v.to_f64_lossy()).sum();
            epoch_loss += loss.to_f64_lossy() * bws;
            epoch_weight += bws;
            adam.step(model.params_mut(), &grad);
        }
        train_trace.push(epoch_loss / epoch_weight + jac);
        let v = nll(&model, &x, &c, w, &val_idx).to_f64_lossy() + jac;
        if !v.is_finite() {
            return Err(Error::TrainingDiverged { epoch, detail: format!("validation loss {v}") });
        }
        val_trace.push(v);
        if v < best.0 {
            best = (v, model.params().to_vec(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                early_stopped = true;
                break;
            }
        }
    }
    let epochs_run = val_trace.len();
    let trained = model.with_params(best.1)?;
    let trained_loss = nll(&trained, &x, &c, w, &all_idx);
    let used_baseline = !(trained_loss <= baseline_loss);
    let chosen = if used_baseline { base } else { trained };
    let final_train_loss = nll(&chosen, &x, &c, w, &tr_idx).to_f64_lossy() + jac;
    Ok((
        chosen,
        FitReport {
            final_train_loss,
            train_trace,
            validation_trace: val_trace,
            initial_validation_loss: initial_val,
            epochs_run,
            best_epoch: best.2,
            early_stopped,
            seed: stream.seed(),
            baseline_loss: baseline_loss.to_f64_lossy() + jac,
            used_baseline,
        },
    ))
}

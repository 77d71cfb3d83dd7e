#![allow(dead_code)]

use rand::Rng;
use sbilab::cde::{ConditionalMixture, Direction, Layout, Standardization};
use sbilab::rng::std_normal;

/// A mixture with random parameters and a random, non-trivial standardization.
pub fn random_mixture<R: Rng>(rng: &mut R, k: usize, d: usize, c: usize) -> ConditionalMixture<f64> {
    let layout = Layout { k, target_dim: d, cond_dim: c };
    let floor = 1e-4;
    let mut p = vec![0.0; layout.n_params()];
    for i in layout.gate_weights() {
        p[i] = std_normal(rng);
    }
    for i in layout.gate_bias() {
        p[i] = std_normal(rng);
    }
    for i in layout.mean_weights() {
        p[i] = 0.5 * std_normal(rng);
    }
    for i in layout.mean_bias() {
        p[i] = 1.5 * std_normal(rng);
    }
    let chol = layout.chol();
    let tri = layout.tri();
    for j in 0..k {
        let mut off = chol.start + j * tri;
        for a in 0..d {
            for b in 0..=a {
                p[off] = if a == b { (rng.random_range(0.3..1.5f64) - floor).ln() } else { 0.3 * std_normal(rng) };
                off += 1;
            }
        }
    }
    let std = Standardization {
        target_mean: (0..d).map(|_| 2.0 * std_normal(rng)).collect(),
        target_sd: (0..d).map(|_| rng.random_range(0.5..3.0)).collect(),
        cond_mean: (0..c).map(|_| std_normal(rng)).collect(),
        cond_sd: (0..c).map(|_| rng.random_range(0.5..2.0)).collect(),
    };
    ConditionalMixture::from_raw(layout, p, floor, Direction::ParamsGivenSummaries, std).unwrap()
}

pub fn random_rows<R: Rng>(rng: &mut R, rows: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..dim).map(|_| scale * std_normal(rng)).collect()).collect()
}

/// Largest per-parameter relative error between the analytic gradient of the
/// weighted NLL and central finite differences.
pub fn gradient_check<R: Rng>(rng: &mut R, model: &ConditionalMixture<f64>) -> f64 {
    let l = model.layout();
    let x = random_rows(rng, 6, l.target_dim, 1.5);
    let c = random_rows(rng, 6, l.cond_dim, 1.0);
    let w: Vec<f64> = (0..6).map(|_| rng.random_range(0.2..2.0)).collect();
    let (_, grad) = model.weighted_nll_grad(&x, &c, &w);
    let base = model.params().to_vec();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let h = 1e-5 * base[i].abs().max(1.0);
        let mut up = base.clone();
        up[i] += h;
        let mut dn = base.clone();
        dn[i] -= h;
        let fu = model.with_params(up).unwrap().weighted_nll_grad(&x, &c, &w).0;
        let fd = model.with_params(dn).unwrap().weighted_nll_grad(&x, &c, &w).0;
        let numeric = (fu - fd) / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((grad[i] - numeric).abs() / scale);
    }
    worst
}

/// Midpoint-rule mass of `q(. | cond)` over a box covering every component
/// by at least 12 standard deviations; targets of dimension 1 or 2.
pub fn quadrature_mass(model: &ConditionalMixture<f64>, cond: &[f64]) -> f64 {
    let d = model.layout().target_dim;
    assert!(d == 1 || d == 2, "quadrature only for d <= 2");
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for j in 0..model.k() {
        let mu = model.component_mean(j, cond).unwrap();
        let l = model.cholesky(j);
        let sd = &model.standardization().target_sd;
        for a in 0..d {
            let row: f64 = (0..=a).map(|b| l[a * d + b] * l[a * d + b]).sum::<f64>().sqrt() * sd[a];
            lo[a] = lo[a].min(mu[a] - 12.0 * row);
            hi[a] = hi[a].max(mu[a] + 12.0 * row);
        }
    }
    let cells = if d == 1 { 20_000 } else { 500 };
    let h: Vec<f64> = (0..d).map(|a| (hi[a] - lo[a]) / cells as f64).collect();
    if d == 1 {
        let pts: Vec<Vec<f64>> = (0..cells).map(|i| vec![lo[0] + (i as f64 + 0.5) * h[0]]).collect();
        model.log_density_many(&pts, cond).unwrap().iter().map(|v| v.exp()).sum::<f64>() * h[0]
    } else {
        let mut mass = 0.0;
        for i in 0..cells {
            let x0 = lo[0] + (i as f64 + 0.5) * h[0];
            let pts: Vec<Vec<f64>> = (0..cells).map(|j| vec![x0, lo[1] + (j as f64 + 0.5) * h[1]]).collect();
            mass += model.log_density_many(&pts, cond).unwrap().iter().map(|v| v.exp()).sum::<f64>();
        }
        mass * h[0] * h[1]
    }
}

/// Two-sided Kolmogorov–Smirnov statistic of `xs` against `cdf`.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

pub fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

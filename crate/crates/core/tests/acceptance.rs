//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --release --test acceptance -- 3 9`.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::Rng;
use sbilab::cde::FitConfig;
use sbilab::harness::*;
use sbilab::inference::{run_nle, run_npe, MCMCConfig};
use sbilab::metrics::knn_kld;
use sbilab::models::*;
use sbilab::oracle::{gk_order_stat_moments, ma2_moments};
use sbilab::rng::std_normal;
use sbilab::Stream;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean of `metric` per rule, in the order of `rules`; `None` if any cell failed.
fn rule_means(rows: &[ResultRow], n: usize, rules: &[NRule], metric: &str) -> Option<Vec<f64>> {
    if rows.iter().any(|r| r.is_error()) {
        return None;
    }
    rules
        .iter()
        .map(|rule| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n && r.rule == rule.as_str() && r.metric == metric).map(|r| r.value).collect();
            (!v.is_empty()).then(|| mean(&v))
        })
        .collect()
}

fn first_error(rows: &[ResultRow]) -> String {
    rows.iter().find(|r| r.is_error()).map(|r| format!("error row: {}", r.message)).unwrap_or_default()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for &t in &idx[i..=j] {
            r[t] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn oracle_moments() -> Outcome {
    let n = 1000;
    let (_, c) = ma2_moments(&[0.0, 0.0], n).unwrap();
    let e00 = (c[0] - 2.0 / n as f64).abs();
    let e12 = c[5].abs();
    let (_, g) = gk_order_stat_moments(&[0.0, 1.0, 0.0, 0.0], &[0.5], n).unwrap();
    let eg = (g[0] - std::f64::consts::PI / (2.0 * n as f64)).abs();
    outcome(e00 <= 1e-12 && e12 <= 1e-12 && eg <= 1e-10, format!("|err| var0 {e00:.1e}, cov12 {e12:.1e}, gk median {eg:.1e}"))
}

/// Largest |empirical - asymptotic| covariance entry in Monte Carlo sds.
fn worst_z(sims: &[Vec<f64>], cov: &[f64]) -> f64 {
    let d = sims[0].len();
    let means: Vec<f64> = (0..d).map(|a| mean(&column(sims, a))).collect();
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in a..d {
            let prods: Vec<f64> = sims.iter().map(|s| (s[a] - means[a]) * (s[b] - means[b])).collect();
            let (c, v) = mean_var(&prods);
            worst = worst.max((c - cov[a * d + b]).abs() / (v / sims.len() as f64).sqrt());
        }
    }
    worst
}

fn moments_vs_simulation() -> Outcome {
    let (n, reps) = (2000, 100_000u64);
    let ma2 = ModelSpec::<f64>::ma2(n);
    let gk = ModelSpec::<f64>::gk(n, SummaryId::Octiles);
    let mut report = Vec::new();
    let mut pass = true;
    for (spec, label) in [(&ma2, "ma2"), (&gk, "gk")] {
        let base = Stream::new(7001).named(label);
        let sims: Vec<Vec<f64>> = (0..reps).map(|r| spec.simulate(&spec.truth, &mut base.child(r).rng()).unwrap().into_vec()).collect();
        let (_, cov) = if label == "ma2" {
            ma2_moments(&spec.truth, n).unwrap()
        } else {
            let probs: Vec<f64> = (1..8).map(|i| i as f64 / 8.0).collect();
            gk_order_stat_moments(&spec.truth, &probs, n).unwrap()
        };
        let z = worst_z(&sims, &cov);
        pass &= z <= 3.0;
        report.push(format!("{label} worst {z:.2} sd"));
    }
    outcome(pass, report.join(", "))
}

fn kld_calibration() -> Outcome {
    let m = 10_000;
    let draw = |seed: u64, shift: f64| -> Vec<Vec<f64>> {
        let mut rng = Stream::new(seed).rng();
        (0..m).map(|_| vec![shift + std_normal(&mut rng)]).collect()
    };
    let shifted: Vec<f64> = (0..50).map(|s| knn_kld(&draw(8000 + s, 0.0), &draw(9000 + s, 1.0), 1).unwrap().value).collect();
    let same: Vec<f64> = (0..50).map(|s| knn_kld(&draw(8100 + s, 0.0), &draw(9100 + s, 0.0), 1).unwrap().value).collect();
    let (a, b) = (mean(&shifted), mean(&same));
    outcome((a - 0.5).abs() <= 0.03 && b.abs() <= 0.03, format!("N(0,1)||N(1,1) {a:.4}, identical {b:.4}"))
}

fn conjugate_end_to_end() -> Outcome {
    let n = 100;
    let spec = ModelSpec::<f64>::toy(n);
    let s = spec.simulate(&spec.truth, &mut Stream::new(7101).rng()).unwrap();
    let (pm, pv) = toy_exact_posterior(s.as_slice()[0], n);
    let mut rng = Stream::new(7102).rng();
    let exact: Vec<Vec<f64>> = (0..10_000).map(|_| vec![pm + pv.sqrt() * std_normal(&mut rng)]).collect();
    let cfg = FitConfig::default();
    let npe = run_npe(&spec, &s, 10_000, 8, 10_000, &cfg, Stream::new(7103)).unwrap().draws;
    let nle = run_nle(&spec, &s, 10_000, 8, &cfg, &MCMCConfig::default(), Stream::new(7104)).unwrap().draws;
    let mut pass = true;
    let mut report = Vec::new();
    for (label, ds) in [("npe", &npe), ("nle", &nle)] {
        let (m, v) = mean_var(&ds.column(0));
        let mean_err = (m - pm).abs() / pv.sqrt();
        let sd_err = (v.sqrt() / pv.sqrt() - 1.0).abs();
        let kld = knn_kld(&exact, ds.draws(), 1).unwrap().value;
        pass &= mean_err <= 0.1 && sd_err <= 0.1 && kld <= 0.1;
        report.push(format!("{label}: mean err {mean_err:.3} sd, sd err {:.1}%, KLD {kld:.3}", 100.0 * sd_err));
    }
    outcome(pass, report.join("; "))
}

fn kld_trend() -> Outcome {
    let cfg = ExperimentConfig { n: vec![100], replications: 20, metrics: vec![Metric::Kld], ..ExperimentConfig::preset("gk-kld").unwrap() };
    let rows = run_experiment(&cfg).unwrap();
    let Some(m) = rule_means(&rows, 100, &NRule::ALL, "kld") else { return outcome(false, first_error(&rows)) };
    let decreasing = m.windows(2).all(|w| w[1] < w[0]);
    let ratio = m[0] / m[3];
    outcome(decreasing && ratio >= 1.5, format!("mean KLD by rule {m:.3?}, n/n2 ratio {ratio:.2}"))
}

fn coverage_trend() -> Outcome {
    let rules = [NRule::Linear, NRule::Square];
    let cfg = ExperimentConfig {
        n: vec![100],
        replications: 50,
        rules: rules.to_vec(),
        metrics: vec![Metric::Coverage],
        ..ExperimentConfig::preset("stereo-coverage").unwrap()
    };
    let rows = run_experiment(&cfg).unwrap();
    let Some(c) = rule_means(&rows, 100, &rules, "cover@0.90:lambda") else { return outcome(false, first_error(&rows)) };
    let pass = c[0] - c[1] >= 0.05 && (c[1] - 0.90).abs() <= 0.10;
    outcome(pass, format!("90% coverage of lambda: N=n {:.2}, N=n2 {:.2}", c[0], c[1]))
}

fn incompatibility_contrast() -> Outcome {
    let cfg = ExperimentConfig::preset("ma2-incompat").unwrap();
    let index = [0.0, 1.0, 2.0, 3.0];
    let mut corr = Vec::new();
    for d0 in [0.99, 0.01] {
        let rows = incompatibility_study(&cfg, Some(d0)).unwrap();
        let Some(m) = rule_means(&rows, 100, &NRule::ALL, "kld") else { return outcome(false, first_error(&rows)) };
        corr.push((d0, spearman(&index, &m), m));
    }
    let pass = corr[0].1 <= -0.8 && corr[1].1 > -0.5;
    let detail = corr.iter().map(|(d0, r, m)| format!("delta0 {d0}: rho {r:.2}, KLD {m:.3?}")).collect::<Vec<_>>().join("; ");
    outcome(pass, detail)
}

fn bvm() -> Outcome {
    let cfg = ExperimentConfig { metrics: vec![Metric::Gaussianity], ..ExperimentConfig::preset("ma2-bvm").unwrap() };
    let rows = run_experiment(&cfg).unwrap();
    let rule = [NRule::ThreeHalves];
    let (Some(small), Some(large)) = (rule_means(&rows, 500, &rule, "gaussianity_kld"), rule_means(&rows, 5000, &rule, "gaussianity_kld")) else {
        return outcome(false, first_error(&rows));
    };
    outcome(large[0] <= 0.1 && large[0] <= small[0], format!("gaussianity KLD n=500 {:.4}, n=5000 {:.4}", small[0], large[0]))
}

fn determinism() -> Outcome {
    let quick_fit = FitConfig { max_epochs: 30, ..FitConfig::default() };
    let configs = [
        ExperimentConfig { n: vec![100], replications: 2, fit: quick_fit.clone(), ..ExperimentConfig::preset("gk-kld").unwrap() },
        ExperimentConfig {
            method: Method::Nle,
            replications: 2,
            rules: vec![NRule::Linear, NRule::NLogN],
            fit: quick_fit,
            mcmc: MCMCConfig { chain_length: 20_000, thin: 10, ..MCMCConfig::default() },
            ..ExperimentConfig::preset("toy-conjugate").unwrap()
        },
        ExperimentConfig { method: Method::AbcSmc, replications: 2, rules: vec![NRule::NLogN], ..ExperimentConfig::preset("stereo-coverage").unwrap() },
    ];
    let mut identical = 0;
    for cfg in &configs {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let fa = write_run(cfg, &run_experiment(cfg).unwrap(), a.path()).unwrap();
        let fb = write_run(cfg, &run_experiment(cfg).unwrap(), b.path()).unwrap();
        if fs::read(fa.results).unwrap() == fs::read(fb.results).unwrap() {
            identical += 1;
        }
    }
    outcome(identical == configs.len(), format!("{identical} of {} reruns byte-identical", configs.len()))
}

fn cde_suites() -> Outcome {
    let mut rng = Stream::new(7201).rng();
    let mut worst_grad = 0.0f64;
    let mut worst_mass = 0.0f64;
    for _ in 0..100 {
        let (k, d, c) = (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(0..=3));
        let m = random_mixture(&mut rng, k, d, c);
        worst_grad = worst_grad.max(gradient_check(&mut rng, &m));
    }
    for i in 0..100 {
        let (k, d) = (rng.random_range(1..=3), 1 + i % 2);
        let m = random_mixture(&mut rng, k, d, 2);
        let cond: Vec<f64> = (0..2).map(|_| 2.0 * std_normal(&mut rng)).collect();
        worst_mass = worst_mass.max((quadrature_mass(&m, &cond) - 1.0).abs());
    }
    outcome(worst_grad <= 1e-4 && worst_mass <= 1e-3, format!("worst gradient rel err {worst_grad:.1e}, worst |mass - 1| {worst_mass:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle moment exactness", oracle_moments),
        ("moments vs simulation", moments_vs_simulation),
        ("KLD estimator calibration", kld_calibration),
        ("conjugate end-to-end", conjugate_end_to_end),
        ("KLD decreases with N", kld_trend),
        ("coverage trend", coverage_trend),
        ("incompatibility contrast", incompatibility_contrast),
        ("Gaussianity at large n", bvm),
        ("determinism", determinism),
        ("cde gradient and normalization", cde_suites),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!("criterion {id:>2} {:<32} {}  {} ({:.0}s)", name, if o.pass { "PASS" } else { "FAIL" }, o.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

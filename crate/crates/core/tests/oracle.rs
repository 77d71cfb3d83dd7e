mod common;

use common::*;
use proptest::prelude::*;
use sbilab::inference::{rwm_sample, MCMCConfig};
use sbilab::metrics::knn_kld;
use sbilab::models::*;
use sbilab::oracle::*;
use sbilab::Stream;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("t{i}")).collect()
}

fn log_sum(a: f64, b: f64) -> f64 {
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

#[test]
fn tempering_splits_a_mirror_symmetric_target_evenly() {
    // the triangle prior is symmetric in theta1, so each mode carries half the mass
    let peak = |t: &[f64], c: f64| -0.5 * (((t[0] - c) / 0.05).powi(2) + ((t[1] - 0.2) / 0.05).powi(2));
    let log_lik = |t: &[f64]| log_sum(peak(t, 0.5), peak(t, -0.5));
    let (ds, sched) = tempered_smc(log_lik, &Prior::Ma2Triangle, names(2), &TemperingConfig::default(), Stream::new(501)).unwrap();
    assert_eq!(ds.len(), 4000);
    let right = ds.column(0).iter().filter(|&&v| v > 0.0).count() as f64 / ds.len() as f64;
    assert!((right - 0.5).abs() <= 0.05, "right mode holds {right}");
    assert!(sched.temperatures.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*sched.temperatures.last().unwrap(), 1.0);
    assert_eq!(sched.temperatures[0], 0.0);
}

#[test]
fn tempering_with_a_flat_likelihood_returns_the_prior() {
    let prior = Prior::Uniform { lower: vec![-2.0, 10.0], upper: vec![3.0, 11.0] };
    let (ds, _) = tempered_smc(|_: &[f64]| 0.0, &prior, names(2), &TemperingConfig::default(), Stream::new(502)).unwrap();
    for (j, (lo, hi)) in [(-2.0, 3.0), (10.0, 11.0)].into_iter().enumerate() {
        let d = ks_statistic(&ds.column(j), |v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0));
        assert!(d < ks_critical_1pct(ds.len()), "marginal {j}: KS {d}");
    }
}

#[test]
fn tempering_and_metropolis_agree_on_a_compatible_ma2_posterior() {
    let spec = ModelSpec::<f64>::ma2(1000);
    let s = spec.simulate(&spec.truth, &mut Stream::new(503).rng()).unwrap();
    let like = GaussianSummaryLikelihood::for_spec(&spec).unwrap();
    let obs = s.as_slice();
    let log_lik = |t: &[f64]| like.log_likelihood(obs, t).unwrap_or(f64::NEG_INFINITY);
    let (smc, _) = tempered_smc(log_lik, &spec.prior, names(2), &TemperingConfig::default(), Stream::new(504)).unwrap();
    let target = |t: &[f64]| oracle_log_posterior(&like, &spec.prior, obs, t).unwrap_or(f64::NEG_INFINITY);
    let cfg = MCMCConfig { chain_length: 200_000, thin: 40, ..MCMCConfig::default() };
    let rwm = rwm_sample(target, &spec.truth, &[0.03, 0.03], names(2), &cfg, Stream::new(505)).unwrap();
    let kld = knn_kld(smc.draws(), rwm.draws(), 1).unwrap().value;
    assert!(kld <= 0.1, "SMC vs RWM {kld}");
}

#[test]
fn ma2_covariance_matches_monte_carlo_across_the_triangle() {
    let (n, reps) = (2000, 100_000u64);
    let mut rng = Stream::new(506).rng();
    let prior = ModelSpec::<f64>::ma2(n);
    for i in 0..5 {
        let t = prior_sample(&prior, &mut rng).unwrap();
        let tv = t.values().to_vec();
        let base = Stream::new(507).child(i);
        let sims: Vec<Vec<f64>> = (0..reps)
            .map(|r| ma2_summaries(&ma2_simulate(&t, n, &mut base.child(r).rng()).unwrap()).unwrap().into_vec())
            .collect();
        let (_, cov) = ma2_moments(&tv, n).unwrap();
        let means: Vec<f64> = (0..3).map(|a| mean_var(&column(&sims, a)).0).collect();
        for a in 0..3 {
            for b in a..3 {
                let prods: Vec<f64> = sims.iter().map(|s| (s[a] - means[a]) * (s[b] - means[b])).collect();
                let (c, v) = mean_var(&prods);
                let se = (v / reps as f64).sqrt();
                assert!((c - cov[a * 3 + b]).abs() <= 3.0 * se, "theta {tv:?} ({a},{b}): {c} vs {}", cov[a * 3 + b]);
            }
        }
    }
}

#[test]
fn gk_median_variance_of_a_standard_normal() {
    let theta = [0.0f64, 1.0, 0.0, 0.0];
    for n in [10, 1000] {
        let (mean, cov) = gk_order_stat_moments(&theta, &[0.5], n).unwrap();
        assert!(mean[0].abs() < 1e-15);
        assert!((cov[0] - std::f64::consts::PI / (2.0 * n as f64)).abs() < 1e-14);
    }
    assert!(gk_order_stat_moments(&[0.0, 1.0, 0.0, 0.0], &[0.5, 0.5], 10).is_err());
}

fn triangle_point() -> impl Strategy<Value = [f64; 2]> {
    (-0.99f64..0.99, -0.99f64..0.99).prop_filter("inside the triangle", |(a, b)| a + b > -0.99 && a - b < 0.99).prop_map(|(a, b)| [a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ma2_covariance_is_symmetric_and_scales_as_one_over_n(t in triangle_point(), n in 10usize..5000) {
        let (mean, cov) = ma2_moments(&t, n).unwrap();
        let (_, cov1) = ma2_moments(&t, 1).unwrap();
        prop_assert!((mean[0] - (1.0 + t[0] * t[0] + t[1] * t[1])).abs() < 1e-15);
        for a in 0..3 {
            for b in 0..3 {
                prop_assert!((cov[a * 3 + b] - cov[b * 3 + a]).abs() <= 1e-15);
                prop_assert!((cov[a * 3 + b] * n as f64 - cov1[a * 3 + b]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gk_diagonal_matches_the_single_quantile_formula(seed in any::<u64>()) {
        let spec = ModelSpec::<f64>::gk(1000, SummaryId::Octiles);
        let theta = prior_sample(&spec, &mut Stream::new(seed).rng()).unwrap().into_values();
        let probs: Vec<f64> = (1..8).map(|i| i as f64 / 8.0).collect();
        if let Ok((_, cov)) = gk_order_stat_moments(&theta, &probs, 1000) {
            for (i, &p) in probs.iter().enumerate() {
                let (_, single) = gk_order_stat_moments(&theta, &[p], 1000).unwrap();
                prop_assert!((cov[i * 7 + i] - single[0]).abs() <= 1e-12 * single[0]);
            }
        }
    }
}

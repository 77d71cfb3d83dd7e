use rayon::prelude::*;

use super::draws::{DrawMeta, DrawSet};
use super::mcmc::{rwm_sample, MCMCConfig};
use crate::cde::{fit, ConditionalMixture, Direction, FitConfig, FitReport, TrainingSet};
use crate::error::{Error, Result};
use crate::linalg::mean_cov;
use crate::models::{ModelSpec, Prior, SummaryVector};
use crate::rng::Stream;
use crate::scalar::Real;

/// Oversampling cap when redrawing posterior draws that leave the prior support.
pub const MAX_TRUNCATION_FACTOR: usize = 100;

/// `count` pairs `theta ~ prior`, `S ~ g_n(. | theta)`, pair `i` drawn from `stream.child(i)`.
pub fn simulate_pairs<T: Real>(spec: &ModelSpec<T>, count: usize, stream: Stream) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    spec.validate()?;
    let pairs: Result<Vec<(Vec<T>, Vec<T>)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            let theta = spec.prior.sample(&mut rng)?;
            let s = spec.simulate(&theta, &mut rng)?;
            Ok((theta, s.into_vec()))
        })
        .collect();
    Ok(pairs?.into_iter().unzip())
}

/// `m` draws from a posterior mixture at `s_obs`, redrawing any that fall
/// outside the prior support. Returns the draws and the discarded fraction.
pub fn sample_in_support<T: Real>(model: &ConditionalMixture<T>, prior: &Prior<T>, s_obs: &[T], m: usize, stream: Stream) -> Result<(Vec<Vec<T>>, f64)> {
    if model.direction() != Direction::ParamsGivenSummaries {
        return Err(Error::Config("posterior sampling needs a parameters-given-summaries mixture".into()));
    }
    let mut rng = stream.rng();
    let mut kept = Vec::with_capacity(m);
    let mut attempts = 0usize;
    let cap = MAX_TRUNCATION_FACTOR * m;
    while kept.len() < m {
        if attempts >= cap {
            return Err(Error::TruncationExhausted { accepted: kept.len(), wanted: m, attempts });
        }
        let batch = (m - kept.len()).max(64).min(cap - attempts);
        attempts += batch;
        for x in model.sample(s_obs, batch, &mut rng)? {
            if kept.len() < m && prior.contains(&x) {
                kept.push(x);
            }
        }
    }
    let leaked = 1.0 - m as f64 / attempts as f64;
    Ok((kept, leaked.max(0.0)))
}

/// Output of a neural estimation run.
#[derive(Clone, Debug)]
pub struct NeuralRun<T: Real = f64> {
    pub model: ConditionalMixture<T>,
    pub draws: DrawSet<T>,
    pub report: FitReport,
}

fn names<T: Real>(spec: &ModelSpec<T>) -> Vec<String> {
    spec.param_names().iter().map(|s| s.to_string()).collect()
}

/// Neural posterior estimation: fit `q(theta | S)` on `n_train` prior-predictive
/// pairs and draw `m` samples at `s_obs`.
pub fn run_npe<T: Real>(
    spec: &ModelSpec<T>,
    s_obs: &SummaryVector<T>,
    n_train: usize,
    k: usize,
    m: usize,
    fit_cfg: &FitConfig,
    stream: Stream,
) -> Result<NeuralRun<T>> {
    check_obs(spec, s_obs)?;
    if n_train < 10 * k {
        return Err(Error::InsufficientData(format!("{n_train} training pairs for {k} components")));
    }
    let (thetas, summaries) = simulate_pairs(spec, n_train, stream.named("simulate"))?;
    let train = TrainingSet::new(thetas, summaries, Direction::ParamsGivenSummaries)?;
    let (model, report) = fit(&train, k, fit_cfg, stream.named("fit"))?;
    let (draws, leaked) = sample_in_support(&model, &spec.prior, s_obs.as_slice(), m, stream.named("sample"))?;
    let meta = DrawMeta {
        method: "npe".into(),
        seed: stream.seed(),
        simulations: n_train as u64,
        leaked_fraction: Some(leaked),
        ..DrawMeta::default()
    };
    Ok(NeuralRun { draws: DrawSet::uniform(names(spec), draws, meta)?, model, report })
}

/// Neural likelihood estimation: fit `q(S | theta)` on `n_train` prior-predictive
/// pairs, then run random-walk Metropolis on `log p(theta) + log q(s_obs | theta)`.
pub fn run_nle<T: Real>(
    spec: &ModelSpec<T>,
    s_obs: &SummaryVector<T>,
    n_train: usize,
    k: usize,
    fit_cfg: &FitConfig,
    mcmc: &MCMCConfig,
    stream: Stream,
) -> Result<NeuralRun<T>> {
    check_obs(spec, s_obs)?;
    if n_train < 10 * k {
        return Err(Error::InsufficientData(format!("{n_train} training pairs for {k} components")));
    }
    mcmc.validate()?;
    let (thetas, summaries) = simulate_pairs(spec, n_train, stream.named("simulate"))?;
    let train = TrainingSet::new(thetas, summaries, Direction::SummariesGivenParams)?;
    let (model, report) = fit(&train, k, fit_cfg, stream.named("fit"))?;
    let obs = s_obs.as_slice();
    let prior = &spec.prior;
    let log_target = |th: &[T]| {
        if !prior.contains(th) {
            return T::neg_infinity();
        }
        prior.log_density(th) + model.log_density(obs, th).unwrap_or(T::neg_infinity())
    };
    // start from the most plausible of a few hundred training parameters
    let candidates = &train.thetas()[..train.len().min(500)];
    let init = candidates
        .iter()
        .map(|t| (log_target(t), t))
        .filter(|(v, _)| v.is_finite())
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .map(|(_, t)| t.clone())
        .ok_or_else(|| Error::DegenerateNlPosterior(0.0))?;
    let (_, cov) = mean_cov(train.thetas(), None);
    let d = spec.param_dim();
    let scales: Vec<T> = (0..d).map(|j| cov[j * d + j].sqrt()).collect();
    let mut draws = rwm_sample(log_target, &init, &scales, names(spec), mcmc, stream.named("mcmc"))?;
    let rate = draws.meta().acceptance_rate.unwrap_or(0.0);
    if rate < 0.01 {
        return Err(Error::DegenerateNlPosterior(rate));
    }
    *draws.meta_mut() = DrawMeta {
        method: "nle".into(),
        seed: stream.seed(),
        simulations: n_train as u64,
        acceptance_rate: Some(rate),
        ..DrawMeta::default()
    };
    Ok(NeuralRun { model, draws, report })
}

fn check_obs<T: Real>(spec: &ModelSpec<T>, s_obs: &SummaryVector<T>) -> Result<()> {
    spec.validate()?;
    if s_obs.len() != spec.summary_dim() {
        return Err(Error::DimensionMismatch { expected: spec.summary_dim(), got: s_obs.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_are_reproducible_and_ordered() {
        let spec = ModelSpec::<f64>::toy(10);
        let (a, sa) = simulate_pairs(&spec, 50, Stream::new(1)).unwrap();
        let (b, _) = simulate_pairs(&spec, 60, Stream::new(1)).unwrap();
        assert_eq!(a[..], b[..50]);
        assert_eq!(sa.len(), 50);
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let spec = ModelSpec::<f64>::toy(10);
        let s = SummaryVector::new(vec![0.1]).unwrap();
        assert!(run_npe(&spec, &s, 50, 8, 10, &FitConfig::default(), Stream::new(0)).is_err());
    }
}

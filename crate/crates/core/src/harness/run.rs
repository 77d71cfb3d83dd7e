use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, Metric, OracleCovariance};
use super::schedule::{n_schedule, NRule};
use crate::error::{Error, Result};
use crate::inference::{abc_smc, run_nle, run_npe, rwm_sample, ABCSMCConfig, DrawMeta, DrawSet};
use crate::metrics::{credible_interval, gaussianity_kld, knn_kld, posterior_mean_bias};
use crate::models::{toy_exact_posterior, ModelId, ModelSpec, SummaryVector};
use crate::oracle::{oracle_log_posterior, tempered_smc, GaussianSummaryLikelihood};
use crate::rng::{std_normal, Stream};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// Training pairs per mixture component below which cells shrink `k`.
pub const PAIRS_PER_COMPONENT: usize = 25;

/// One recorded quantity of one experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema: u32,
    pub model: String,
    pub method: String,
    pub n: usize,
    pub rule: String,
    pub realized_n: usize,
    pub replication: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub simulations: u64,
    /// Empty unless `metric` is `error`.
    pub message: String,
    /// Seconds spent on the cell; kept out of the results file so reruns compare byte for byte.
    #[serde(skip)]
    pub wall_clock: f64,
}

impl ResultRow {
    pub fn is_error(&self) -> bool {
        self.metric == "error"
    }
}

/// Stream of the method run in one cell.
pub fn cell_stream(master: u64, model: ModelId, method: Method, n: usize, rule: NRule, replication: usize) -> Stream {
    Stream::new(master)
        .named(model.as_str())
        .named(method.as_str())
        .child(n as u64)
        .named(rule.as_str())
        .child(replication as u64)
}

/// Stream of the observed dataset for `(n, replication)`, shared by every
/// method and N-rule so that cells are compared on the same data.
pub fn observed_stream(master: u64, model: ModelId, n: usize, replication: usize) -> Stream {
    Stream::new(master).named(model.as_str()).named("observed").child(n as u64).child(replication as u64)
}

fn oracle_stream(master: u64, model: ModelId, n: usize, replication: usize) -> Stream {
    Stream::new(master).named(model.as_str()).named("oracle").child(n as u64).child(replication as u64)
}

/// Mixture size used for a training set of `n_train` pairs.
pub fn effective_components(k: usize, n_train: usize) -> usize {
    k.min((n_train / PAIRS_PER_COMPONENT).max(1))
}

/// Observed summary at the true parameter, with the optional first-summary override.
pub fn observed_summary(cfg: &ExperimentConfig, spec: &ModelSpec<f64>, n: usize, replication: usize) -> Result<SummaryVector<f64>> {
    let mut rng = observed_stream(cfg.master_seed, cfg.model, n, replication).rng();
    let s = spec.simulate(&spec.truth, &mut rng)?;
    match cfg.delta0_override {
        Some(d0) => {
            let mut v = s.into_vec();
            v[0] = d0;
            SummaryVector::new(v)
        }
        None => Ok(s),
    }
}

fn names(spec: &ModelSpec<f64>) -> Vec<String> {
    spec.param_names().iter().map(|s| s.to_string()).collect()
}

/// Reference posterior draws for one observed summary: tempered SMC on the
/// Gaussian summary likelihood for MA(2), random-walk Metropolis on it for the
/// g-and-k model, exact draws for the conjugate toy.
pub fn oracle_draws(cfg: &ExperimentConfig, spec: &ModelSpec<f64>, s_obs: &SummaryVector<f64>, stream: Stream) -> Result<DrawSet<f64>> {
    let ocfg = &cfg.oracle;
    match spec.model {
        ModelId::Toy => {
            let (mean, var) = toy_exact_posterior(s_obs.as_slice()[0], spec.n);
            let mut rng = stream.rng();
            let draws = (0..ocfg.draws).map(|_| vec![mean + var.sqrt() * std_normal(&mut rng)]).collect();
            let meta = DrawMeta { method: "oracle-exact".into(), seed: stream.seed(), ..DrawMeta::default() };
            DrawSet::uniform(names(spec), draws, meta)
        }
        ModelId::Stereo => Err(Error::Config("no reference posterior exists for the stereological model".into())),
        ModelId::Ma2 | ModelId::Gk => {
            let mut like = GaussianSummaryLikelihood::for_spec(spec)?;
            if ocfg.covariance == OracleCovariance::Truth {
                like = like.with_covariance_at(&spec.truth)?;
            }
            let obs = s_obs.as_slice();
            let log_lik = |th: &[f64]| like.log_likelihood(obs, th).unwrap_or(f64::NEG_INFINITY);
            if spec.model == ModelId::Ma2 {
                let (mut ds, _) = tempered_smc(log_lik, &spec.prior, names(spec), &ocfg.tempering, stream)?;
                ds.meta_mut().method = "oracle-smc".into();
                Ok(ds)
            } else {
                let target = |th: &[f64]| oracle_log_posterior(&like, &spec.prior, obs, th).unwrap_or(f64::NEG_INFINITY);
                let scales = vec![1.0 / (spec.n as f64).sqrt(); spec.param_dim()];
                let mut ds = rwm_sample(target, &spec.truth, &scales, names(spec), &ocfg.mcmc, stream)?;
                ds.meta_mut().method = "oracle-rwm".into();
                Ok(ds)
            }
        }
    }
}

struct CellOutput {
    draws: DrawSet<f64>,
    extra: Vec<(String, f64)>,
}

fn run_method(cfg: &ExperimentConfig, spec: &ModelSpec<f64>, s_obs: &SummaryVector<f64>, n_train: usize, oracle: Option<&Result<DrawSet<f64>>>, stream: Stream) -> Result<CellOutput> {
    let k = effective_components(cfg.components, n_train);
    match cfg.method {
        Method::Npe => {
            let run = run_npe(spec, s_obs, n_train, k, cfg.draws, &cfg.fit, stream)?;
            let extra = vec![
                ("components".into(), k as f64),
                ("leaked_fraction".into(), run.draws.meta().leaked_fraction.unwrap_or(0.0)),
                ("used_baseline".into(), f64::from(u8::from(run.report.used_baseline))),
            ];
            Ok(CellOutput { draws: run.draws, extra })
        }
        Method::Nle => {
            let run = run_nle(spec, s_obs, n_train, k, &cfg.fit, &cfg.mcmc, stream)?;
            let extra = vec![
                ("components".into(), k as f64),
                ("acceptance_rate".into(), run.draws.meta().acceptance_rate.unwrap_or(0.0)),
                ("used_baseline".into(), f64::from(u8::from(run.report.used_baseline))),
            ];
            Ok(CellOutput { draws: run.draws, extra })
        }
        Method::AbcSmc => {
            let abc = ABCSMCConfig { max_simulations: n_train as u64, ..cfg.abc.clone() };
            let run = abc_smc(spec, s_obs, &abc, stream)?;
            let extra = vec![("rounds".into(), run.tolerances.len() as f64)];
            Ok(CellOutput { draws: run.draws, extra })
        }
        Method::Oracle => match oracle {
            Some(Ok(ds)) => Ok(CellOutput { draws: ds.clone(), extra: vec![] }),
            Some(Err(e)) => Err(Error::Config(format!("oracle failed: {e}"))),
            None => oracle_draws(cfg, spec, s_obs, stream).map(|draws| CellOutput { draws, extra: vec![] }),
        },
    }
}

fn metric_rows(cfg: &ExperimentConfig, spec: &ModelSpec<f64>, out: &CellOutput, oracle: Option<&Result<DrawSet<f64>>>, stream: Stream) -> Result<Vec<(String, f64)>> {
    let ds = &out.draws;
    let mut rows = out.extra.clone();
    for metric in &cfg.metrics {
        match metric {
            Metric::Coverage => {
                for &level in &cfg.levels {
                    let ci = credible_interval(ds, level)?;
                    for (j, name) in ds.names().iter().enumerate() {
                        let (lo, hi) = ci[j];
                        let hit = lo <= spec.truth[j] && spec.truth[j] <= hi;
                        rows.push((format!("cover@{level:.2}:{name}"), f64::from(u8::from(hit))));
                    }
                }
            }
            Metric::Bias => {
                for (name, b) in ds.names().iter().zip(posterior_mean_bias(ds, &spec.truth)?) {
                    rows.push((format!("bias:{name}"), b));
                }
            }
            Metric::Kld => {
                let reference = match oracle {
                    Some(Ok(r)) => r,
                    Some(Err(e)) => return Err(Error::Config(format!("oracle failed: {e}"))),
                    None => return Err(Error::Config("no oracle available for the divergence metric".into())),
                };
                let mut rng = stream.named("kld").rng();
                let q = ds.equally_weighted(ds.len(), &mut rng);
                let p = reference.equally_weighted(reference.len(), &mut rng);
                rows.push(("kld".into(), knn_kld(&p, &q, cfg.kld_neighbours)?.value));
            }
            Metric::Gaussianity => {
                let mut rng = stream.named("gaussianity").rng();
                rows.push(("gaussianity_kld".into(), gaussianity_kld(ds, cfg.kld_neighbours, &mut rng)?.value));
            }
        }
    }
    Ok(rows)
}

/// Runs every `(n, rule, replication)` cell and returns rows sorted by
/// `(n, rule, replication, metric)`. Failing cells yield an `error` row.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let needs_oracle = cfg.metrics.contains(&Metric::Kld) || cfg.method == Method::Oracle;
    let datasets: Vec<(usize, usize)> = cfg.n.iter().flat_map(|&n| (0..cfg.replications).map(move |r| (n, r))).collect();

    // observed data and oracle draws are shared by all N-rules of a dataset
    let prepared: Vec<Result<(ModelSpec<f64>, SummaryVector<f64>, Option<Result<DrawSet<f64>>>)>> = datasets
        .par_iter()
        .map(|&(n, rep)| {
            let spec = cfg.model_spec(n)?;
            let s_obs = observed_summary(cfg, &spec, n, rep)?;
            let oracle = needs_oracle.then(|| oracle_draws(cfg, &spec, &s_obs, oracle_stream(cfg.master_seed, cfg.model, n, rep)));
            Ok((spec, s_obs, oracle))
        })
        .collect();

    let cells: Vec<(usize, NRule)> = (0..datasets.len()).flat_map(|d| cfg.rules.iter().map(move |&r| (d, r))).collect();
    let mut rows: Vec<ResultRow> = cells
        .par_iter()
        .flat_map_iter(|&(d, rule)| {
            let (n, rep) = datasets[d];
            let stream = cell_stream(cfg.master_seed, cfg.model, cfg.method, n, rule, rep);
            let start = Instant::now();
            let realized = n_schedule(n, rule);
            let base = ResultRow {
                schema: RESULTS_SCHEMA_VERSION,
                model: cfg.model.as_str().into(),
                method: cfg.method.as_str().into(),
                n,
                rule: rule.as_str().into(),
                realized_n: *realized.as_ref().unwrap_or(&0),
                replication: rep,
                seed: stream.seed(),
                metric: String::new(),
                value: f64::NAN,
                simulations: 0,
                message: String::new(),
                wall_clock: 0.0,
            };
            let outcome = (|| -> Result<(u64, Vec<(String, f64)>)> {
                let n_train = realized?;
                let (spec, s_obs, oracle) = prepared[d].as_ref().map_err(|e| Error::Config(e.to_string()))?;
                let out = run_method(cfg, spec, s_obs, n_train, oracle.as_ref(), stream)?;
                let sims = out.draws.meta().simulations;
                Ok((sims, metric_rows(cfg, spec, &out, oracle.as_ref(), stream)?))
            })();
            let secs = start.elapsed().as_secs_f64();
            let rows: Vec<ResultRow> = match outcome {
                Ok((sims, metrics)) => metrics
                    .into_iter()
                    .map(|(metric, value)| ResultRow { metric, value, simulations: sims, wall_clock: secs, ..base.clone() })
                    .collect(),
                Err(e) => vec![ResultRow { metric: "error".into(), message: e.to_string(), wall_clock: secs, ..base }],
            };
            rows.into_iter()
        })
        .collect();
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    let rule_index = |r: &str| r.parse::<NRule>().map(NRule::index).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        (a.n, rule_index(&a.rule), a.replication, &a.metric).cmp(&(b.n, rule_index(&b.rule), b.replication, &b.metric))
    });
}

/// MA(2) experiment whose observed sample variance is replaced by `delta0`;
/// `None` leaves the observed summaries untouched.
pub fn incompatibility_study(cfg: &ExperimentConfig, delta0: Option<f64>) -> Result<Vec<ResultRow>> {
    if cfg.model != ModelId::Ma2 {
        return Err(Error::Config("the incompatibility study is defined for the MA(2) model".into()));
    }
    let cfg = ExperimentConfig { delta0_override: delta0, ..cfg.clone() };
    run_experiment(&cfg)
}

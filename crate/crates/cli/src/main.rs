//! `sbilab` command line: single inference runs, reference posteriors and
//! replicated experiment grids.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sbilab::harness::{
    coverage_table, incompatibility_study, observed_summary, oracle_draws, read_results, run_experiment, write_aggregates, write_run, aggregate,
    ExperimentConfig, Method, NRule, ResultRow,
};
use sbilab::inference::{abc_smc, run_nle, run_npe, simulate_pairs, DrawSet};
use sbilab::metrics::knn_kld;
use sbilab::models::{ModelId, ModelSpec, SummaryId, SummaryVector};
use sbilab::Stream;

#[derive(Parser)]
#[command(name = "sbilab", version, about = "Simulation-based inference experiments")]
struct Cli {
    /// Experiment configuration (TOML); flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Start from a built-in preset instead of the defaults.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Directory under which outputs are written.
    #[arg(long, global = true, env = "SBILAB_OUTPUT", default_value = "runs")]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

/// Overrides shared by every subcommand.
#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long)]
    model: Option<ModelId>,
    #[arg(long)]
    summary: Option<SummaryId>,
    /// True parameter, comma separated.
    #[arg(long, value_delimiter = ',')]
    truth: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, relative to the output root.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings of a single inference run.
#[derive(Args, Clone)]
struct Single {
    #[command(flatten)]
    common: Common,
    /// Observation count of the dataset.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Observed summary, comma separated; simulated at the truth when absent.
    #[arg(long, value_delimiter = ',')]
    obs: Option<Vec<f64>>,
    /// Replication index used to simulate the observed summary.
    #[arg(long, default_value_t = 0)]
    replication: usize,
    /// Replace the first observed summary (MA(2) only).
    #[arg(long)]
    delta0: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate summaries, at the truth or from the prior predictive.
    Simulate {
        #[command(flatten)]
        single: Single,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Draw parameters from the prior instead of fixing the truth.
        #[arg(long)]
        from_prior: bool,
    },
    /// Fit a posterior mixture and sample it at the observed summary.
    FitNpe {
        #[command(flatten)]
        single: Single,
        /// Training pairs.
        #[arg(long = "train", short = 'N')]
        n_train: usize,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Fit a likelihood mixture and run Metropolis on the implied posterior.
    FitNle {
        #[command(flatten)]
        single: Single,
        #[arg(long = "train", short = 'N')]
        n_train: usize,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long)]
        chain_length: Option<usize>,
    },
    /// Adaptive ABC-SMC.
    Abc {
        #[command(flatten)]
        single: Single,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        max_simulations: Option<u64>,
    },
    /// Reference posterior draws.
    OracleSample {
        #[command(flatten)]
        single: Single,
    },
    /// kNN divergence estimate between two draw files, KLD(p || q).
    Kld {
        p: PathBuf,
        q: PathBuf,
        #[arg(long, short, default_value_t = 1)]
        k: usize,
    },
    /// Run a replicated experiment grid.
    Experiment {
        #[command(flatten)]
        grid: Grid,
    },
    /// Coverage table from a results file.
    CoverageTable {
        results: PathBuf,
        #[arg(long)]
        parameter: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.9, 0.95])]
        levels: Vec<f64>,
    },
    /// MA(2) study with a forced first summary.
    Incompat {
        #[command(flatten)]
        grid: Grid,
        /// Forced sample variance; `none` leaves the data untouched.
        #[arg(long, default_value = "0.99")]
        delta0: String,
    },
}

#[derive(Args, Clone)]
struct Grid {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<NRule>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    /// Full replication counts and observation grid.
    #[arg(long)]
    full_scale: bool,
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig> {
    let cfg = match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => bail!("give either --config or --preset, not both"),
        (Some(path), None) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    Ok(cfg)
}

fn apply_common(cfg: &mut ExperimentConfig, c: &Common) {
    if let Some(m) = c.model {
        if m != cfg.model {
            // summaries and truths of another model do not carry over
            cfg.summary = None;
            cfg.truth = None;
            cfg.delta0_override = None;
        }
        cfg.model = m;
    }
    if c.summary.is_some() {
        cfg.summary = c.summary;
    }
    if c.truth.is_some() {
        cfg.truth = c.truth.clone();
    }
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
}

fn apply_grid(cfg: &mut ExperimentConfig, g: &Grid) {
    apply_common(cfg, &g.common);
    if let Some(name) = &g.name {
        cfg.name = name.clone();
    }
    if let Some(m) = g.method {
        cfg.method = m;
    }
    if let Some(n) = &g.n {
        cfg.n = n.clone();
    }
    if let Some(r) = &g.rules {
        cfg.rules = r.clone();
    }
    if let Some(r) = g.replications {
        cfg.replications = r;
    }
    if let Some(d) = g.draws {
        cfg.draws = d;
    }
    if g.full_scale {
        *cfg = cfg.clone().full_scale();
    }
}

fn output_dir(root: &Path, cfg: &ExperimentConfig, flag: &Option<PathBuf>, fallback: &str) -> PathBuf {
    let rel = flag.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(fallback));
    if rel.is_absolute() {
        rel
    } else {
        root.join(rel)
    }
}

/// Spec and observed summary of a single run.
fn observed(cfg: &mut ExperimentConfig, single: &Single) -> Result<(ModelSpec<f64>, SummaryVector<f64>)> {
    apply_common(cfg, &single.common);
    if single.delta0.is_some() {
        cfg.delta0_override = single.delta0;
    }
    cfg.n = vec![single.n];
    cfg.validate()?;
    let spec = cfg.model_spec(single.n)?;
    let s = match &single.obs {
        Some(v) => {
            let mut v = v.clone();
            if let (Some(d0), true) = (cfg.delta0_override, !v.is_empty()) {
                v[0] = d0;
            }
            SummaryVector::new(v)?
        }
        None => observed_summary(cfg, &spec, single.n, single.replication)?,
    };
    if s.len() != spec.summary_dim() {
        bail!("observed summary has {} entries, the {} model uses {}", s.len(), spec.model, spec.summary_dim());
    }
    Ok((spec, s))
}

fn run_stream(cfg: &ExperimentConfig, label: &str, single: &Single) -> Stream {
    Stream::new(cfg.master_seed).named(label).child(single.n as u64).child(single.replication as u64)
}

fn report_draws(ds: &DrawSet<f64>, dir: &Path, stem: &str) -> Result<()> {
    let (csv, _) = ds.write(dir, stem)?;
    let mean = ds.mean();
    let summary: Vec<String> = ds.names().iter().zip(&mean).map(|(n, m)| format!("{n}={m:.4}")).collect();
    println!("{} draws -> {}  (posterior mean {})", ds.len(), csv.display(), summary.join(" "));
    Ok(())
}

fn finish_grid(cfg: &ExperimentConfig, rows: &[ResultRow], dir: &Path) -> Result<ExitCode> {
    let files = write_run(cfg, rows, dir)?;
    write_aggregates(&aggregate(rows), &dir.join("aggregates.csv"))?;
    let errors = rows.iter().filter(|r| r.is_error()).count();
    println!("{} rows ({} errors) -> {}", rows.len(), errors, files.results.display());
    for r in rows.iter().filter(|r| r.is_error()).take(5) {
        eprintln!("error n={} rule={} rep={}: {}", r.n, r.rule, r.replication, r.message);
    }
    Ok(if errors == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = base_config(&cli)?;
    let root = cli.output_root.clone();
    match &cli.command {
        Command::Simulate { single, count, from_prior } => {
            let (spec, _) = observed(&mut cfg, single)?;
            let stream = run_stream(&cfg, "simulate", single);
            let (thetas, sums) = if *from_prior {
                simulate_pairs(&spec, *count, stream)?
            } else {
                let mut rows = Vec::with_capacity(*count);
                for i in 0..*count {
                    rows.push(spec.simulate(&spec.truth, &mut stream.child(i as u64).rng())?.into_vec());
                }
                (vec![spec.truth.clone(); *count], rows)
            };
            let dir = output_dir(&root, &cfg, &single.common.out, "simulate");
            fs::create_dir_all(&dir)?;
            let path = dir.join("simulations.csv");
            let mut w = csv::Writer::from_path(&path)?;
            let mut header: Vec<String> = spec.param_names().iter().map(|s| s.to_string()).collect();
            header.extend((0..spec.summary_dim()).map(|j| format!("s{j}")));
            w.write_record(&header)?;
            for (t, s) in thetas.iter().zip(&sums) {
                w.write_record(t.iter().chain(s).map(|v| format!("{v:e}")))?;
            }
            w.flush()?;
            println!("{count} simulations -> {}", path.display());
        }
        Command::FitNpe { single, n_train, components, draws } => {
            let (spec, s) = observed(&mut cfg, single)?;
            let k = components.unwrap_or(cfg.components);
            let m = draws.unwrap_or(cfg.draws);
            let run = run_npe(&spec, &s, *n_train, k, m, &cfg.fit, run_stream(&cfg, "npe", single))?;
            let dir = output_dir(&root, &cfg, &single.common.out, "npe");
            report_draws(&run.draws, &dir, "draws")?;
            fs::write(dir.join("model.json"), run.model.to_json()?)?;
            fs::write(dir.join("fit.json"), serde_json::to_string_pretty(&run.report)?)?;
        }
        Command::FitNle { single, n_train, components, chain_length } => {
            let (spec, s) = observed(&mut cfg, single)?;
            let k = components.unwrap_or(cfg.components);
            if let Some(c) = chain_length {
                cfg.mcmc.chain_length = *c;
            }
            let run = run_nle(&spec, &s, *n_train, k, &cfg.fit, &cfg.mcmc, run_stream(&cfg, "nle", single))?;
            let dir = output_dir(&root, &cfg, &single.common.out, "nle");
            report_draws(&run.draws, &dir, "draws")?;
            fs::write(dir.join("model.json"), run.model.to_json()?)?;
            fs::write(dir.join("fit.json"), serde_json::to_string_pretty(&run.report)?)?;
        }
        Command::Abc { single, particles, max_simulations } => {
            let (spec, s) = observed(&mut cfg, single)?;
            if let Some(p) = particles {
                cfg.abc.particles = *p;
            }
            if let Some(m) = max_simulations {
                cfg.abc.max_simulations = *m;
            }
            let run = abc_smc(&spec, &s, &cfg.abc, run_stream(&cfg, "abc-smc", single))?;
            let dir = output_dir(&root, &cfg, &single.common.out, "abc");
            report_draws(&run.draws, &dir, "draws")?;
            println!("{} simulations over {} rounds", run.total_simulations, run.tolerances.len());
        }
        Command::OracleSample { single } => {
            let (spec, s) = observed(&mut cfg, single)?;
            let ds = oracle_draws(&cfg, &spec, &s, run_stream(&cfg, "oracle", single))?;
            let dir = output_dir(&root, &cfg, &single.common.out, "oracle");
            report_draws(&ds, &dir, "draws")?;
        }
        Command::Kld { p, q, k } => {
            let (p, q) = (DrawSet::<f64>::read(p)?, DrawSet::<f64>::read(q)?);
            if p.names() != q.names() {
                bail!("draw files have different parameters: {:?} vs {:?}", p.names(), q.names());
            }
            let mut rng = Stream::new(cfg.master_seed).named("kld").rng();
            let (pe, qe) = (p.equally_weighted(p.len(), &mut rng), q.equally_weighted(q.len(), &mut rng));
            let est = knn_kld(&pe, &qe, *k)?;
            println!("{}", serde_json::to_string(&serde_json::json!({ "kld": est.value, "m_p": est.m_p, "m_q": est.m_q, "k": est.k }))?);
        }
        Command::Experiment { grid } => {
            apply_grid(&mut cfg, grid);
            let rows = run_experiment(&cfg)?;
            let dir = output_dir(&root, &cfg, &grid.common.out, &cfg.name.clone());
            return finish_grid(&cfg, &rows, &dir);
        }
        Command::CoverageTable { results, parameter, levels } => {
            let rows = read_results(results)?;
            print!("{}", coverage_table(&rows, parameter, levels)?);
        }
        Command::Incompat { grid, delta0 } => {
            if cli.config.is_none() && cli.preset.is_none() {
                cfg = ExperimentConfig::preset("ma2-incompat")?;
            }
            apply_grid(&mut cfg, grid);
            let d0 = match delta0.as_str() {
                "none" => None,
                v => Some(v.parse::<f64>().with_context(|| format!("--delta0 {v:?} is neither a number nor `none`"))?),
            };
            let rows = incompatibility_study(&cfg, d0)?;
            let cfg = ExperimentConfig { delta0_override: d0, ..cfg };
            let tag = d0.map_or("none".to_string(), |d| d.to_string());
            let dir = output_dir(&root, &cfg, &grid.common.out, &format!("{}-delta0-{tag}", cfg.name));
            return finish_grid(&cfg, &rows, &dir);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

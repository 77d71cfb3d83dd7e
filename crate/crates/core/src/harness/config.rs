use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::schedule::NRule;
use crate::cde::FitConfig;
use crate::error::{Error, Result};
use crate::inference::{ABCSMCConfig, MCMCConfig};
use crate::metrics::DEFAULT_LEVELS;
use crate::models::{ModelId, ModelSpec, SummaryId};
use crate::oracle::TemperingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Npe,
    Nle,
    AbcSmc,
    Oracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Npe => "npe",
            Method::Nle => "nle",
            Method::AbcSmc => "abc-smc",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::Npe, Method::Nle, Method::AbcSmc, Method::Oracle]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownId { kind: "method", value: s.to_string() })
    }
}

/// Per-cell quantities an experiment records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Interval hit indicators at each credible level.
    Coverage,
    /// Posterior mean minus truth.
    Bias,
    /// kNN divergence from the oracle posterior to the method's draws.
    Kld,
    /// kNN divergence from the draws to their moment-matched Gaussian.
    Gaussianity,
}

/// Which covariance the Gaussian summary oracle uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleCovariance {
    /// `Sigma_S(theta)` re-evaluated at every parameter.
    Theta,
    /// `Sigma_S(theta_0)` fixed at the true parameter.
    Truth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub covariance: OracleCovariance,
    pub tempering: TemperingConfig,
    pub mcmc: MCMCConfig,
    /// Exact draws for the conjugate toy model.
    pub draws: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            covariance: OracleCovariance::Theta,
            tempering: TemperingConfig::default(),
            mcmc: MCMCConfig { chain_length: 1_000_000, burn_in_fraction: 0.2, initial_scale: 0.5, target_acceptance: 0.234, thin: 80 },
            draws: 10_000,
        }
    }
}

/// A replicated experiment grid over observation counts and N-rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SummaryId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    pub method: Method,
    pub n: Vec<usize>,
    pub rules: Vec<NRule>,
    pub replications: usize,
    /// Posterior draws per cell.
    pub draws: usize,
    /// Mixture components; cells with fewer than `25 * components` pairs use fewer.
    pub components: usize,
    pub metrics: Vec<Metric>,
    pub levels: Vec<f64>,
    pub kld_neighbours: usize,
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Replaces the first observed summary (MA(2) only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0_override: Option<f64>,
    pub fit: FitConfig,
    pub mcmc: MCMCConfig,
    pub abc: ABCSMCConfig,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            model: ModelId::Toy,
            summary: None,
            truth: None,
            method: Method::Npe,
            n: vec![100],
            rules: NRule::ALL.to_vec(),
            replications: 20,
            draws: 2000,
            components: 8,
            metrics: vec![Metric::Coverage, Metric::Bias],
            levels: DEFAULT_LEVELS.to_vec(),
            kld_neighbours: 1,
            master_seed: 20_240_601,
            output_dir: None,
            delta0_override: None,
            fit: FitConfig::default(),
            mcmc: MCMCConfig::default(),
            abc: ABCSMCConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 5] = ["stereo-coverage", "gk-kld", "ma2-incompat", "ma2-bvm", "toy-conjugate"];

impl ExperimentConfig {
    /// Built-in experiment grids at desk scale: 20 replications and `n` up to
    /// 1000. [`ExperimentConfig::full_scale`] widens them.
    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentConfig { name: name.to_string(), ..ExperimentConfig::default() };
        let cfg = match name {
            "stereo-coverage" => ExperimentConfig { model: ModelId::Stereo, n: vec![100, 500, 1000], ..base },
            "gk-kld" => ExperimentConfig {
                model: ModelId::Gk,
                summary: Some(SummaryId::Octiles),
                n: vec![100, 500, 1000],
                metrics: vec![Metric::Kld, Metric::Coverage, Metric::Bias],
                ..base
            },
            "ma2-incompat" => ExperimentConfig {
                model: ModelId::Ma2,
                n: vec![100],
                replications: 10,
                metrics: vec![Metric::Kld],
                delta0_override: Some(0.99),
                // a theta-dependent covariance lets the reference absorb the forced misfit
                oracle: OracleConfig { covariance: OracleCovariance::Truth, ..OracleConfig::default() },
                ..base
            },
            "ma2-bvm" => ExperimentConfig {
                model: ModelId::Ma2,
                n: vec![500, 5000],
                rules: vec![NRule::ThreeHalves],
                replications: 3,
                metrics: vec![Metric::Gaussianity, Metric::Kld],
                draws: 5000,
                ..base
            },
            "toy-conjugate" => ExperimentConfig {
                model: ModelId::Toy,
                n: vec![100],
                metrics: vec![Metric::Kld, Metric::Bias, Metric::Coverage],
                ..base
            },
            _ => return Err(Error::UnknownId { kind: "preset", value: name.to_string() }),
        };
        Ok(cfg)
    }

    /// Full grid: 100 replications and `n = 5000` added where the default grid omits it.
    pub fn full_scale(mut self) -> Self {
        self.replications = self.replications.max(100);
        if self.n.len() > 1 && !self.n.contains(&5000) {
            self.n.push(5000);
        }
        self
    }

    pub fn model_spec(&self, n: usize) -> Result<ModelSpec<f64>> {
        let spec = ModelSpec::from_ids(self.model, self.summary, n)?;
        match &self.truth {
            Some(t) => spec.with_truth(t.clone()),
            None => Ok(spec),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.rules.is_empty() {
            return Err(Error::Config("experiment needs at least one n and one N-rule".into()));
        }
        if self.draws == 0 || self.components == 0 || self.kld_neighbours == 0 {
            return Err(Error::Config("draws, components and kNN order must be positive".into()));
        }
        if self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Config("credible levels must lie in (0, 1)".into()));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::Config("master seed must fit in a signed 64-bit integer".into()));
        }
        if self.delta0_override.is_some() && self.model != ModelId::Ma2 {
            return Err(Error::Config("the first-summary override applies to the MA(2) model only".into()));
        }
        for &n in &self.n {
            self.model_spec(n)?;
        }
        self.mcmc.validate()?;
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

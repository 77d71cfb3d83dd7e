//! Benchmark simulators, summary statistics and priors.
//!
//! Four models are available: the MA(2) time series (`ma2`), the g-and-k
//! distribution (`gk`), the stereological inclusion model (`stereo`) and a
//! conjugate normal-mean model (`toy`) whose exact posterior is known.

mod gk;
mod ma2;
mod stereo;
mod toy;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{open_uniform, std_normal};
use crate::scalar::Real;

pub use gk::{gk_quantile, gk_quantile_derivative, gk_simulate, gk_simulate_summaries, octile_probs, summary_probs, GK_C};
pub use ma2::{ma2_mean, ma2_simulate, ma2_summaries};
pub use stereo::{stereo_simulate, stereo_simulate_summaries, stereo_summaries, StereoSample, STEREO_THRESHOLD};
pub use toy::{toy_exact_posterior, toy_simulate_summaries};

/// Maximum rejection attempts when sampling a constrained prior.
pub const MAX_PRIOR_ATTEMPTS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    Ma2,
    Gk,
    Stereo,
    #[serde(alias = "gaussian-toy")]
    Toy,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Ma2 => "ma2",
            ModelId::Gk => "gk",
            ModelId::Stereo => "stereo",
            ModelId::Toy => "toy",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelId::Ma2 => &["theta1", "theta2"],
            ModelId::Gk => &["A", "B", "g", "k"],
            ModelId::Stereo => &["lambda", "sigma", "xi"],
            ModelId::Toy => &["theta"],
        }
    }

    pub fn default_summary(self) -> SummaryId {
        match self {
            ModelId::Ma2 => SummaryId::Autocov,
            ModelId::Gk => SummaryId::Octiles,
            ModelId::Stereo => SummaryId::Inclusions,
            ModelId::Toy => SummaryId::Mean,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ma2" => Ok(ModelId::Ma2),
            "gk" => Ok(ModelId::Gk),
            "stereo" => Ok(ModelId::Stereo),
            "toy" | "gaussian-toy" => Ok(ModelId::Toy),
            _ => Err(Error::UnknownId { kind: "model", value: s.to_string() }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum SummaryId {
    /// Sample variance and lag-1/lag-2 autocovariances.
    Autocov,
    Octiles,
    Hexadeciles,
    /// Inclusion count and log mean/min/max of observed diameters.
    Inclusions,
    /// Sample mean.
    Mean,
}

impl SummaryId {
    pub fn as_str(self) -> &'static str {
        match self {
            SummaryId::Autocov => "autocov",
            SummaryId::Octiles => "octiles",
            SummaryId::Hexadeciles => "hexadeciles",
            SummaryId::Inclusions => "inclusions",
            SummaryId::Mean => "mean",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            SummaryId::Autocov => 3,
            SummaryId::Octiles => 7,
            SummaryId::Hexadeciles => 15,
            SummaryId::Inclusions => 4,
            SummaryId::Mean => 1,
        }
    }
}

impl fmt::Display for SummaryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SummaryId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autocov" => Ok(SummaryId::Autocov),
            "octiles" => Ok(SummaryId::Octiles),
            "hexadeciles" => Ok(SummaryId::Hexadeciles),
            "inclusions" => Ok(SummaryId::Inclusions),
            "mean" => Ok(SummaryId::Mean),
            _ => Err(Error::UnknownId { kind: "summary", value: s.to_string() }),
        }
    }
}

/// A point in a model's parameter space.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct ParamVector<T: Real = f64> {
    values: Vec<T>,
    #[serde(skip)]
    names: &'static [&'static str],
}

impl<T: Real> ParamVector<T> {
    pub fn new(names: &'static [&'static str], values: Vec<T>) -> Result<Self> {
        if values.len() != names.len() {
            return Err(Error::DimensionMismatch { expected: names.len(), got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter value {v}")));
        }
        Ok(ParamVector { values, names })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.names
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// The summary statistic of one (observed or simulated) dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "")]
pub struct SummaryVector<T: Real = f64>(Vec<T>);

impl<T: Real> SummaryVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("summary value {v}")));
        }
        Ok(SummaryVector(values))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }
}

/// Raw observations: a length-`n` series, or the retained section diameters for `stereo`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries<T: Real = f64> {
    pub observations: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound = "")]
pub enum Prior<T: Real = f64> {
    /// Independent uniforms on a box.
    Uniform { lower: Vec<T>, upper: Vec<T> },
    /// Uniform on `{-1<t1<1, -1<t2<1, t1+t2>-1, t1-t2<1}` (area 3).
    Ma2Triangle,
    /// One-dimensional normal.
    Normal { mean: T, sd: T },
}

impl<T: Real> Prior<T> {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Uniform { lower, .. } => lower.len(),
            Prior::Ma2Triangle => 2,
            Prior::Normal { .. } => 1,
        }
    }

    /// Bounding box of the support, if bounded.
    pub fn bounds(&self) -> Option<(Vec<T>, Vec<T>)> {
        match self {
            Prior::Uniform { lower, upper } => Some((lower.clone(), upper.clone())),
            Prior::Ma2Triangle => Some((vec![-T::one(); 2], vec![T::one(); 2])),
            Prior::Normal { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Uniform { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
                }
                for (l, u) in lower.iter().zip(upper) {
                    if !l.is_finite() || !u.is_finite() || l >= u {
                        return Err(Error::Config(format!("prior bounds [{l}, {u}] are not a finite interval")));
                    }
                }
                Ok(())
            }
            Prior::Ma2Triangle => Ok(()),
            Prior::Normal { mean, sd } => {
                if !mean.is_finite() || !(*sd > T::zero()) {
                    return Err(Error::Config(format!("normal prior N({mean}, {sd}^2) is invalid")));
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, theta: &[T]) -> bool {
        if theta.len() != self.dim() {
            return false;
        }
        match self {
            Prior::Uniform { lower, upper } => {
                theta.iter().zip(lower.iter().zip(upper)).all(|(&t, (&l, &u))| t >= l && t <= u)
            }
            Prior::Ma2Triangle => {
                let (t1, t2) = (theta[0], theta[1]);
                let one = T::one();
                t1 > -one && t1 < one && t2 > -one && t2 < one && t1 + t2 > -one && t1 - t2 < one
            }
            Prior::Normal { .. } => theta[0].is_finite(),
        }
    }

    /// Log prior density; `-inf` outside the support.
    pub fn log_density(&self, theta: &[T]) -> T {
        if !self.contains(theta) {
            return T::neg_infinity();
        }
        match self {
            Prior::Uniform { lower, upper } => -lower.iter().zip(upper).map(|(&l, &u)| (u - l).ln()).sum::<T>(),
            Prior::Ma2Triangle => -T::lit(3.0).ln(),
            Prior::Normal { mean, sd } => {
                let z = (theta[0] - *mean) / *sd;
                -T::lit(0.5) * z * z - sd.ln() - T::lit(0.5) * T::TAU().ln()
            }
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<Vec<T>> {
        match self {
            Prior::Uniform { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| l + (u - l) * T::lit(open_uniform(rng)))
                .collect()),
            Prior::Ma2Triangle => {
                for _ in 0..MAX_PRIOR_ATTEMPTS {
                    let t: Vec<T> = (0..2).map(|_| T::lit(2.0 * open_uniform(rng) - 1.0)).collect();
                    if self.contains(&t) {
                        return Ok(t);
                    }
                }
                Err(Error::DegeneratePrior(MAX_PRIOR_ATTEMPTS))
            }
            Prior::Normal { mean, sd } => Ok(vec![*mean + *sd * T::lit(std_normal(rng))]),
        }
    }
}

/// Everything needed to simulate one benchmark: model, summary choice, prior,
/// synthetic truth and observation count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelSpec<T: Real = f64> {
    pub model: ModelId,
    pub summary: SummaryId,
    pub n: usize,
    pub prior: Prior<T>,
    pub truth: Vec<T>,
}

fn lits<T: Real>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::lit(x)).collect()
}

impl<T: Real> ModelSpec<T> {
    pub fn ma2(n: usize) -> Self {
        ModelSpec { model: ModelId::Ma2, summary: SummaryId::Autocov, n, prior: Prior::Ma2Triangle, truth: lits(&[0.6, 0.2]) }
    }

    pub fn gk(n: usize, summary: SummaryId) -> Self {
        ModelSpec {
            model: ModelId::Gk,
            summary,
            n,
            prior: Prior::Uniform { lower: lits(&[0.0; 4]), upper: lits(&[10.0; 4]) },
            truth: lits(&[3.0, 1.0, 2.0, 0.5]),
        }
    }

    pub fn stereo(n: usize) -> Self {
        ModelSpec {
            model: ModelId::Stereo,
            summary: SummaryId::Inclusions,
            n,
            prior: Prior::Uniform { lower: lits(&[30.0, 0.0, -3.0]), upper: lits(&[200.0, 15.0, 3.0]) },
            truth: lits(&[100.0, 2.0, 0.1]),
        }
    }

    pub fn toy(n: usize) -> Self {
        ModelSpec {
            model: ModelId::Toy,
            summary: SummaryId::Mean,
            n,
            prior: Prior::Normal { mean: T::zero(), sd: T::one() },
            truth: lits(&[0.5]),
        }
    }

    /// Default spec for a model id with an optional summary override.
    pub fn from_ids(model: ModelId, summary: Option<SummaryId>, n: usize) -> Result<Self> {
        let mut spec = match model {
            ModelId::Ma2 => Self::ma2(n),
            ModelId::Gk => Self::gk(n, SummaryId::Octiles),
            ModelId::Stereo => Self::stereo(n),
            ModelId::Toy => Self::toy(n),
        };
        if let Some(s) = summary {
            spec.summary = s;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_truth(mut self, truth: Vec<T>) -> Result<Self> {
        self.truth = truth;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        let allowed = match self.model {
            ModelId::Ma2 => &[SummaryId::Autocov][..],
            ModelId::Gk => &[SummaryId::Octiles, SummaryId::Hexadeciles][..],
            ModelId::Stereo => &[SummaryId::Inclusions][..],
            ModelId::Toy => &[SummaryId::Mean][..],
        };
        if !allowed.contains(&self.summary) {
            return Err(Error::Config(format!("summary {} is not defined for model {}", self.summary, self.model)));
        }
        if self.prior.dim() != self.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.param_dim(), got: self.prior.dim() });
        }
        if !self.prior.contains(&self.truth) {
            return Err(Error::Config("true parameter lies outside the prior support".into()));
        }
        let min_n = match self.model {
            ModelId::Ma2 => 3,
            ModelId::Gk => 16,
            _ => 1,
        };
        if self.n < min_n {
            return Err(Error::InvalidParameter(format!("n = {} is below the minimum {min_n} for {}", self.n, self.model)));
        }
        Ok(())
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        self.model.param_names()
    }

    pub fn param_dim(&self) -> usize {
        self.param_names().len()
    }

    pub fn summary_dim(&self) -> usize {
        self.summary.dim()
    }

    pub fn truth_vector(&self) -> Result<ParamVector<T>> {
        ParamVector::new(self.param_names(), self.truth.clone())
    }

    /// Simulates one dataset at `theta` and reduces it to its summary.
    pub fn simulate<R: RngCore + ?Sized>(&self, theta: &[T], rng: &mut R) -> Result<SummaryVector<T>> {
        if theta.len() != self.param_dim() {
            return Err(Error::DimensionMismatch { expected: self.param_dim(), got: theta.len() });
        }
        let theta = ParamVector::new(self.param_names(), theta.to_vec())?;
        match self.model {
            ModelId::Ma2 => ma2_summaries(&ma2_simulate(&theta, self.n, rng)?),
            ModelId::Gk => gk_simulate_summaries(&theta, self.n, self.summary, rng),
            ModelId::Stereo => stereo_simulate_summaries(&theta, self.n, rng),
            ModelId::Toy => toy_simulate_summaries(theta.values()[0], self.n, rng),
        }
    }
}

/// Draws one parameter vector from the spec's prior.
pub fn prior_sample<T: Real, R: RngCore + ?Sized>(spec: &ModelSpec<T>, rng: &mut R) -> Result<ParamVector<T>> {
    spec.prior.validate()?;
    ParamVector::new(spec.param_names(), spec.prior.sample(rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn stereo_prior_draws_stay_in_box() {
        let spec = ModelSpec::<f64>::stereo(100);
        let mut rng = Stream::new(7).rng();
        for _ in 0..10_000 {
            let t = prior_sample(&spec, &mut rng).unwrap();
            let v = t.values();
            assert!((30.0..=200.0).contains(&v[0]));
            assert!((0.0..=15.0).contains(&v[1]));
            assert!((-3.0..=3.0).contains(&v[2]));
        }
    }

    #[test]
    fn stereo_lambda_prior_mean() {
        let spec = ModelSpec::<f64>::stereo(100);
        let mut rng = Stream::new(8).rng();
        let m = (0..100_000).map(|_| prior_sample(&spec, &mut rng).unwrap().values()[0]).sum::<f64>() / 1e5;
        assert!((m - 115.0).abs() < 1.0, "mean {m}");
    }

    #[test]
    fn ma2_prior_respects_triangle() {
        let spec = ModelSpec::<f64>::ma2(100);
        let mut rng = Stream::new(9).rng();
        for _ in 0..10_000 {
            let t = prior_sample(&spec, &mut rng).unwrap().into_values();
            assert!(t[0] > -1.0 && t[0] < 1.0);
            assert!(t[0] + t[1] > -1.0);
            assert!(t[0] - t[1] < 1.0);
        }
    }

    #[test]
    fn ma2_prior_density_integrates_to_one() {
        let p = Prior::<f64>::Ma2Triangle;
        let g = 400;
        let h = 2.0 / g as f64;
        let mut mass = 0.0;
        for i in 0..g {
            for j in 0..g {
                let t = [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
                let ld = p.log_density(&t);
                if ld.is_finite() {
                    mass += ld.exp() * h * h;
                }
            }
        }
        assert!((mass - 1.0).abs() < 0.01, "mass {mass}");
    }

    #[test]
    fn degenerate_uniform_bounds_are_rejected() {
        let p = Prior::<f64>::Uniform { lower: vec![1.0], upper: vec![1.0] };
        assert!(p.validate().is_err());
        let spec = ModelSpec { model: ModelId::Toy, summary: SummaryId::Mean, n: 10, prior: p, truth: vec![1.0] };
        assert!(prior_sample(&spec, &mut Stream::new(1).rng()).is_err());
    }

    #[test]
    fn ids_round_trip_through_strings() {
        for m in [ModelId::Ma2, ModelId::Gk, ModelId::Stereo, ModelId::Toy] {
            assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
        }
        for s in [SummaryId::Autocov, SummaryId::Octiles, SummaryId::Hexadeciles, SummaryId::Inclusions, SummaryId::Mean] {
            assert_eq!(s.as_str().parse::<SummaryId>().unwrap(), s);
        }
        assert!("quartiles".parse::<SummaryId>().is_err());
    }

    #[test]
    fn spec_validation_catches_bad_summary_and_truth() {
        let mut s = ModelSpec::<f64>::gk(100, SummaryId::Octiles);
        s.summary = SummaryId::Autocov;
        assert!(s.validate().is_err());
        assert!(ModelSpec::<f64>::ma2(100).with_truth(vec![0.9, -0.5]).is_err());
        assert!(ModelSpec::<f64>::gk(8, SummaryId::Octiles).validate().is_err());
    }

    #[test]
    fn simulate_is_deterministic_per_stream() {
        for spec in [ModelSpec::<f64>::ma2(50), ModelSpec::gk(50, SummaryId::Octiles), ModelSpec::stereo(100), ModelSpec::toy(20)] {
            let a = spec.simulate(&spec.truth, &mut Stream::new(3).rng()).unwrap();
            let b = spec.simulate(&spec.truth, &mut Stream::new(3).rng()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), spec.summary_dim());
        }
    }
}

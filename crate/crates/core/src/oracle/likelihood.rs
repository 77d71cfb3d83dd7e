use super::moments::{gk_order_stat_moments, ma2_moments};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_jittered, mvn_logpdf_chol};
use crate::models::{summary_probs, ModelId, ModelSpec, Prior};
use crate::scalar::Real;

/// Relative diagonal jitter for summary covariances that fail to factor as given.
pub const COVARIANCE_JITTER: f64 = 1e-10;

fn factor<T: Real>(cov: &[T], d: usize) -> Result<Vec<T>> {
    cholesky(cov, d).or_else(|_| cholesky_jittered(cov, d, T::lit(COVARIANCE_JITTER)))
}

#[derive(Clone, Debug, PartialEq)]
enum MomentMap {
    Ma2,
    Gk { probs: Vec<f64> },
    Toy,
}

/// Asymptotic Gaussian law of a summary statistic:
/// `S ~ N(b(theta), Sigma_S(theta) / n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSummaryLikelihood<T: Real = f64> {
    map: MomentMap,
    n: usize,
    /// Cholesky factor used for every `theta` when the covariance is fixed.
    fixed_chol: Option<Vec<T>>,
}

impl<T: Real> GaussianSummaryLikelihood<T> {
    /// The oracle for a model spec; the stereological model has none.
    pub fn for_spec(spec: &ModelSpec<T>) -> Result<Self> {
        let map = match spec.model {
            ModelId::Ma2 => MomentMap::Ma2,
            ModelId::Gk => MomentMap::Gk { probs: summary_probs(spec.summary)? },
            ModelId::Toy => MomentMap::Toy,
            ModelId::Stereo => return Err(Error::Config("no Gaussian summary oracle exists for the stereological model".into())),
        };
        Ok(GaussianSummaryLikelihood { map, n: spec.n, fixed_chol: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn summary_dim(&self) -> usize {
        match &self.map {
            MomentMap::Ma2 => 3,
            MomentMap::Gk { probs } => probs.len(),
            MomentMap::Toy => 1,
        }
    }

    /// Mean `b(theta)` and covariance `Sigma_S(theta) / n`.
    pub fn moments(&self, theta: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        match &self.map {
            MomentMap::Ma2 => ma2_moments(theta, self.n),
            MomentMap::Gk { probs } => gk_order_stat_moments(theta, probs, self.n),
            MomentMap::Toy => {
                if theta.len() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, got: theta.len() });
                }
                Ok((vec![theta[0]], vec![T::one() / T::from_usize_lossy(self.n)]))
            }
        }
    }

    /// Plug-in variant that evaluates the covariance once at `theta0`.
    pub fn with_covariance_at(mut self, theta0: &[T]) -> Result<Self> {
        let (_, cov) = self.moments(theta0)?;
        self.fixed_chol = Some(factor(&cov, self.summary_dim())?);
        Ok(self)
    }

    pub fn log_likelihood(&self, s_obs: &[T], theta: &[T]) -> Result<T> {
        if s_obs.len() != self.summary_dim() {
            return Err(Error::DimensionMismatch { expected: self.summary_dim(), got: s_obs.len() });
        }
        let (mean, cov) = self.moments(theta)?;
        let chol = match &self.fixed_chol {
            Some(l) => l.clone(),
            None => factor(&cov, self.summary_dim())?,
        };
        Ok(mvn_logpdf_chol(s_obs, &mean, &chol))
    }
}

/// `log N(s_obs; b(theta), Sigma_S(theta)/n) + log p(theta)`, `-inf` outside
/// the prior support.
pub fn oracle_log_posterior<T: Real>(like: &GaussianSummaryLikelihood<T>, prior: &Prior<T>, s_obs: &[T], theta: &[T]) -> Result<T> {
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("oracle parameter".into()));
    }
    if !prior.contains(theta) {
        return Ok(T::neg_infinity());
    }
    Ok(like.log_likelihood(s_obs, theta)? + prior.log_density(theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy_exact_posterior;

    #[test]
    fn outside_triangle_is_impossible() {
        let spec = ModelSpec::<f64>::ma2(100);
        let like = GaussianSummaryLikelihood::for_spec(&spec).unwrap();
        let v = oracle_log_posterior(&like, &spec.prior, &[1.3, 0.2, 0.2], &[0.9, -0.5]).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn quadratic_form_vanishes_at_the_mean() {
        let spec = ModelSpec::<f64>::ma2(200);
        let like = GaussianSummaryLikelihood::for_spec(&spec).unwrap();
        let theta = [0.6, 0.2];
        let (mean, cov) = like.moments(&theta).unwrap();
        let l = cholesky(&cov, 3).unwrap();
        let log_det: f64 = (0..3).map(|i| l[i * 3 + i].ln()).sum();
        let v = like.log_likelihood(&mean, &theta).unwrap();
        assert!((v - (-log_det - 1.5 * std::f64::consts::TAU.ln())).abs() < 1e-10);
    }

    #[test]
    fn toy_oracle_is_the_conjugate_posterior() {
        let spec = ModelSpec::<f64>::toy(40);
        let like = GaussianSummaryLikelihood::for_spec(&spec).unwrap();
        let s = 0.37;
        let (m, v) = toy_exact_posterior(s, 40);
        let diffs: Vec<f64> = (0..200)
            .map(|i| {
                let t = -1.0 + i as f64 * 0.01;
                let exact = -0.5 * (t - m) * (t - m) / v;
                oracle_log_posterior(&like, &spec.prior, &[s], &[t]).unwrap() - exact
            })
            .collect();
        assert!(diffs.iter().all(|d| (d - diffs[0]).abs() < 1e-10));
    }

    #[test]
    fn stereo_has_no_oracle() {
        assert!(GaussianSummaryLikelihood::for_spec(&ModelSpec::<f64>::stereo(100)).is_err());
    }
}

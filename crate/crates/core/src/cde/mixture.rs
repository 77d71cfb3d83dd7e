use std::ops::Range;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::training::{Direction, Standardization};
use crate::error::{Error, Result};
use crate::linalg::{back_solve_transpose, forward_solve, lower_mul};
use crate::rng::{open_uniform, std_normal};
use crate::scalar::{log_sum_exp, Real};

pub const MIXTURE_FORMAT_VERSION: u32 = 1;

/// Shape of a mixture and the offsets of each parameter block in the flat vector.
///
/// Blocks, in order: gate weights `k x c`, gate biases `k`, mean weights
/// `k x d x c`, mean biases `k x d`, packed lower Cholesky factors
/// `k x d(d+1)/2` whose diagonal is stored as `log(L_ii - sigma_floor)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub k: usize,
    pub target_dim: usize,
    pub cond_dim: usize,
}

impl Layout {
    pub fn tri(&self) -> usize {
        self.target_dim * (self.target_dim + 1) / 2
    }

    pub fn gate_weights(&self) -> Range<usize> {
        0..self.k * self.cond_dim
    }

    pub fn gate_bias(&self) -> Range<usize> {
        let s = self.gate_weights().end;
        s..s + self.k
    }

    pub fn mean_weights(&self) -> Range<usize> {
        let s = self.gate_bias().end;
        s..s + self.k * self.target_dim * self.cond_dim
    }

    pub fn mean_bias(&self) -> Range<usize> {
        let s = self.mean_weights().end;
        s..s + self.k * self.target_dim
    }

    pub fn chol(&self) -> Range<usize> {
        let s = self.mean_bias().end;
        s..s + self.k * self.tri()
    }

    pub fn n_params(&self) -> usize {
        self.chol().end
    }
}

#[inline]
fn packed(a: usize, b: usize) -> usize {
    a * (a + 1) / 2 + b
}

/// Condition-independent quantities derived from the parameters.
pub(crate) struct Prepared<T> {
    /// Full lower factors, `k x d x d`.
    chol: Vec<T>,
    log_det: Vec<T>,
}

/// Reusable buffers for one evaluation.
pub(crate) struct Scratch<T> {
    logits: Vec<T>,
    ell: Vec<T>,
    resid: Vec<T>,
    u: Vec<T>,
}

impl<T: Real> Scratch<T> {
    pub(crate) fn new(layout: &Layout) -> Self {
        Scratch {
            logits: vec![T::zero(); layout.k],
            ell: vec![T::zero(); layout.k],
            resid: vec![T::zero(); layout.k * layout.target_dim],
            u: vec![T::zero(); layout.target_dim],
        }
    }
}

/// A fitted (or hand-built) conditional Gaussian mixture of experts.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalMixture<T: Real = f64> {
    layout: Layout,
    params: Vec<T>,
    sigma_floor: T,
    direction: Direction,
    standardization: Standardization<T>,
}

impl<T: Real> ConditionalMixture<T> {
    /// Mixture with the given raw parameter vector (see [`Layout`]).
    pub fn from_raw(
        layout: Layout,
        params: Vec<T>,
        sigma_floor: T,
        direction: Direction,
        standardization: Standardization<T>,
    ) -> Result<Self> {
        if layout.k == 0 || layout.target_dim == 0 {
            return Err(Error::InvalidParameter("mixture needs k >= 1 and a non-empty target".into()));
        }
        if params.len() != layout.n_params() {
            return Err(Error::DimensionMismatch { expected: layout.n_params(), got: params.len() });
        }
        if standardization.target_dim() != layout.target_dim || standardization.cond_dim() != layout.cond_dim {
            return Err(Error::DimensionMismatch { expected: layout.target_dim, got: standardization.target_dim() });
        }
        if !(sigma_floor > T::zero()) {
            return Err(Error::InvalidParameter(format!("sigma floor must be positive, got {sigma_floor}")));
        }
        Ok(ConditionalMixture { layout, params, sigma_floor, direction, standardization })
    }

    /// Mixture from interpretable parts, all in standardized coordinates.
    ///
    /// `cholesky[j]` is a full row-major `d x d` lower factor whose diagonal must
    /// exceed `sigma_floor`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        direction: Direction,
        standardization: Standardization<T>,
        gate_weights: Vec<T>,
        gate_bias: Vec<T>,
        mean_weights: Vec<T>,
        mean_bias: Vec<T>,
        cholesky: Vec<Vec<T>>,
        sigma_floor: T,
    ) -> Result<Self> {
        let k = gate_bias.len();
        let d = standardization.target_dim();
        let layout = Layout { k, target_dim: d, cond_dim: standardization.cond_dim() };
        let mut params = Vec::with_capacity(layout.n_params());
        for (block, want) in [
            (&gate_weights, layout.gate_weights().len()),
            (&gate_bias, layout.gate_bias().len()),
            (&mean_weights, layout.mean_weights().len()),
            (&mean_bias, layout.mean_bias().len()),
        ] {
            if block.len() != want {
                return Err(Error::DimensionMismatch { expected: want, got: block.len() });
            }
            params.extend_from_slice(block);
        }
        if cholesky.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: cholesky.len() });
        }
        for l in &cholesky {
            if l.len() != d * d {
                return Err(Error::DimensionMismatch { expected: d * d, got: l.len() });
            }
            for a in 0..d {
                for b in 0..=a {
                    let v = l[a * d + b];
                    if a == b {
                        if !(v > sigma_floor) {
                            return Err(Error::InvalidParameter(format!("Cholesky diagonal {v} not above floor {sigma_floor}")));
                        }
                        params.push((v - sigma_floor).ln());
                    } else {
                        params.push(v);
                    }
                }
            }
        }
        Self::from_raw(layout, params, sigma_floor, direction, standardization)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn k(&self) -> usize {
        self.layout.k
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn standardization(&self) -> &Standardization<T> {
        &self.standardization
    }

    pub fn sigma_floor(&self) -> T {
        self.sigma_floor
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Vec<T> {
        &mut self.params
    }

    /// Copy with a different raw parameter vector.
    pub fn with_params(&self, params: Vec<T>) -> Result<Self> {
        Self::from_raw(self.layout, params, self.sigma_floor, self.direction, self.standardization.clone())
    }

    pub(crate) fn prepare(&self) -> Prepared<T> {
        let Layout { k, target_dim: d, .. } = self.layout;
        let tri = self.layout.tri();
        let base = self.layout.chol().start;
        let mut chol = vec![T::zero(); k * d * d];
        let mut log_det = vec![T::zero(); k];
        for j in 0..k {
            let raw = &self.params[base + j * tri..base + (j + 1) * tri];
            let l = &mut chol[j * d * d..(j + 1) * d * d];
            for a in 0..d {
                for b in 0..a {
                    l[a * d + b] = raw[packed(a, b)];
                }
                let diag = self.sigma_floor + raw[packed(a, a)].exp();
                l[a * d + a] = diag;
                log_det[j] += diag.ln();
            }
        }
        Prepared { chol, log_det }
    }

    /// Full lower Cholesky factor of component `j` (standardized coordinates).
    pub fn cholesky(&self, j: usize) -> Vec<T> {
        let d = self.layout.target_dim;
        self.prepare().chol[j * d * d..(j + 1) * d * d].to_vec()
    }

    fn gate_logits(&self, c: &[T], out: &mut [T]) {
        let m = self.layout.cond_dim;
        let gw = &self.params[self.layout.gate_weights()];
        let gb = &self.params[self.layout.gate_bias()];
        for j in 0..self.layout.k {
            let mut a = gb[j];
            for i in 0..m {
                a += gw[j * m + i] * c[i];
            }
            out[j] = a;
        }
    }

    fn component_mean_std(&self, j: usize, c: &[T], out: &mut [T]) {
        let Layout { target_dim: d, cond_dim: m, .. } = self.layout;
        let mw = &self.params[self.layout.mean_weights()];
        let mb = &self.params[self.layout.mean_bias()];
        for t in 0..d {
            let mut mu = mb[j * d + t];
            let row = &mw[(j * d + t) * m..(j * d + t + 1) * m];
            for i in 0..m {
                mu += row[i] * c[i];
            }
            out[t] = mu;
        }
    }

    /// Gating probabilities at a condition given in original coordinates.
    pub fn gating_weights(&self, condition: &[T]) -> Result<Vec<T>> {
        let c = self.std_condition(condition)?;
        let mut logits = vec![T::zero(); self.layout.k];
        self.gate_logits(&c, &mut logits);
        let lse = log_sum_exp(&logits);
        Ok(logits.into_iter().map(|a| (a - lse).exp()).collect())
    }

    /// Mean of component `j` at a condition, both in original coordinates.
    pub fn component_mean(&self, j: usize, condition: &[T]) -> Result<Vec<T>> {
        let c = self.std_condition(condition)?;
        let d = self.layout.target_dim;
        let mut mu = vec![T::zero(); d];
        self.component_mean_std(j, &c, &mut mu);
        let mut out = vec![T::zero(); d];
        self.standardization.destandardize_target(&mu, &mut out);
        Ok(out)
    }

    fn std_condition(&self, condition: &[T]) -> Result<Vec<T>> {
        if condition.len() != self.layout.cond_dim {
            return Err(Error::DimensionMismatch { expected: self.layout.cond_dim, got: condition.len() });
        }
        let mut c = vec![T::zero(); condition.len()];
        self.standardization.standardize_cond(condition, &mut c);
        Ok(c)
    }

    /// Log-density in standardized coordinates. When `grad` is given, adds
    /// `scale * d(log q)/d(params)` into it.
    pub(crate) fn eval_std(&self, prep: &Prepared<T>, x: &[T], c: &[T], s: &mut Scratch<T>, grad: Option<(&mut [T], T)>) -> T {
        let Layout { k, target_dim: d, cond_dim: m } = self.layout;
        self.gate_logits(c, &mut s.logits);
        let lse_gate = log_sum_exp(&s.logits);
        let norm = T::lit(0.5 * d as f64) * T::TAU().ln();
        let half = T::lit(0.5);
        for j in 0..k {
            let r = &mut s.resid[j * d..(j + 1) * d];
            self.component_mean_std(j, c, r);
            for t in 0..d {
                r[t] = x[t] - r[t];
            }
            let l = &prep.chol[j * d * d..(j + 1) * d * d];
            forward_solve(l, d, r);
            let quad: T = r.iter().map(|&v| v * v).sum();
            s.ell[j] = s.logits[j] - lse_gate - prep.log_det[j] - half * quad - norm;
        }
        let log_q = log_sum_exp(&s.ell);
        let Some((g, scale)) = grad else { return log_q };

        let lay = self.layout;
        let (gw, gb, mw, mb, ch) = (
            lay.gate_weights().start,
            lay.gate_bias().start,
            lay.mean_weights().start,
            lay.mean_bias().start,
            lay.chol().start,
        );
        let tri = lay.tri();
        for j in 0..k {
            let resp = (s.ell[j] - log_q).exp();
            let prior = (s.logits[j] - lse_gate).exp();
            let da = scale * (resp - prior);
            g[gb + j] += da;
            for i in 0..m {
                g[gw + j * m + i] += da * c[i];
            }
            let rs = scale * resp;
            if rs == T::zero() {
                continue;
            }
            let z = &s.resid[j * d..(j + 1) * d];
            let l = &prep.chol[j * d * d..(j + 1) * d * d];
            s.u.copy_from_slice(z);
            back_solve_transpose(l, d, &mut s.u);
            for t in 0..d {
                let gu = rs * s.u[t];
                g[mb + j * d + t] += gu;
                let row = mw + (j * d + t) * m;
                for i in 0..m {
                    g[row + i] += gu * c[i];
                }
            }
            let cj = ch + j * tri;
            for a in 0..d {
                for b in 0..a {
                    g[cj + packed(a, b)] += rs * s.u[a] * z[b];
                }
                let laa = l[a * d + a];
                let dl = s.u[a] * z[a] - T::one() / laa;
                g[cj + packed(a, a)] += rs * dl * (laa - self.sigma_floor);
            }
        }
        log_q
    }

    /// Weighted mean negative log-likelihood `-sum w_i log q(x_i|c_i) / sum w_i`
    /// over standardized rows, and its gradient with respect to [`Self::params`].
    pub fn weighted_nll_grad(&self, targets: &[Vec<T>], conds: &[Vec<T>], weights: &[T]) -> (T, Vec<T>) {
        let prep = self.prepare();
        let mut s = Scratch::new(&self.layout);
        let mut g = vec![T::zero(); self.params.len()];
        let wsum: T = weights.iter().copied().sum();
        let mut loss = T::zero();
        for ((x, c), &w) in targets.iter().zip(conds).zip(weights) {
            let scale = -w / wsum;
            loss += scale * self.eval_std(&prep, x, c, &mut s, Some((&mut g, scale)));
        }
        (loss, g)
    }

    /// `log q(target | condition)` in original coordinates, including the
    /// Jacobian of the target standardization.
    pub fn log_density(&self, target: &[T], condition: &[T]) -> Result<T> {
        if target.len() != self.layout.target_dim {
            return Err(Error::DimensionMismatch { expected: self.layout.target_dim, got: target.len() });
        }
        let c = self.std_condition(condition)?;
        let mut x = vec![T::zero(); target.len()];
        self.standardization.standardize_target(target, &mut x);
        let prep = self.prepare();
        let mut s = Scratch::new(&self.layout);
        Ok(self.eval_std(&prep, &x, &c, &mut s, None) - self.standardization.log_jacobian())
    }

    /// Log-densities of many targets at one condition.
    pub fn log_density_many(&self, targets: &[Vec<T>], condition: &[T]) -> Result<Vec<T>> {
        let c = self.std_condition(condition)?;
        let prep = self.prepare();
        let mut s = Scratch::new(&self.layout);
        let jac = self.standardization.log_jacobian();
        let mut x = vec![T::zero(); self.layout.target_dim];
        targets
            .iter()
            .map(|t| {
                if t.len() != self.layout.target_dim {
                    return Err(Error::DimensionMismatch { expected: self.layout.target_dim, got: t.len() });
                }
                self.standardization.standardize_target(t, &mut x);
                Ok(self.eval_std(&prep, &x, &c, &mut s, None) - jac)
            })
            .collect()
    }

    /// `m` i.i.d. draws from `q(. | condition)` in original coordinates.
    pub fn sample<R: RngCore + ?Sized>(&self, condition: &[T], m: usize, rng: &mut R) -> Result<Vec<Vec<T>>> {
        let weights = self.gating_weights(condition)?;
        let c = self.std_condition(condition)?;
        let d = self.layout.target_dim;
        let prep = self.prepare();
        let k = self.layout.k;
        let mut means = vec![T::zero(); k * d];
        for j in 0..k {
            self.component_mean_std(j, &c, &mut means[j * d..(j + 1) * d]);
        }
        let mut z = vec![T::zero(); d];
        let mut y = vec![T::zero(); d];
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            let u = T::lit(open_uniform(rng));
            let mut acc = T::zero();
            let mut pick = k - 1;
            for (j, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            // skip zero-weight trailing components reached only through rounding
            while weights[pick] == T::zero() && pick > 0 {
                pick -= 1;
            }
            for v in z.iter_mut() {
                *v = T::lit(std_normal(rng));
            }
            lower_mul(&prep.chol[pick * d * d..(pick + 1) * d * d], d, &z, &mut y);
            for t in 0..d {
                y[t] += means[pick * d + t];
            }
            let mut x = vec![T::zero(); d];
            self.standardization.destandardize_target(&y, &mut x);
            out.push(x);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MixtureDocument::from_model(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: MixtureDocument<T> = serde_json::from_str(s)?;
        doc.into_model()
    }
}

/// On-disk form: interpretable blocks rather than the raw optimizer vector.
#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct MixtureDocument<T: Real> {
    format: String,
    version: u32,
    direction: Direction,
    k: usize,
    target_dim: usize,
    cond_dim: usize,
    sigma_floor: T,
    standardization: Standardization<T>,
    gate_weights: Vec<T>,
    gate_bias: Vec<T>,
    mean_weights: Vec<T>,
    mean_bias: Vec<T>,
    cholesky: Vec<Vec<T>>,
}

const FORMAT_TAG: &str = "sbilab-conditional-mixture";

impl<T: Real> MixtureDocument<T> {
    fn from_model(m: &ConditionalMixture<T>) -> Self {
        let l = m.layout;
        MixtureDocument {
            format: FORMAT_TAG.into(),
            version: MIXTURE_FORMAT_VERSION,
            direction: m.direction,
            k: l.k,
            target_dim: l.target_dim,
            cond_dim: l.cond_dim,
            sigma_floor: m.sigma_floor,
            standardization: m.standardization.clone(),
            gate_weights: m.params[l.gate_weights()].to_vec(),
            gate_bias: m.params[l.gate_bias()].to_vec(),
            mean_weights: m.params[l.mean_weights()].to_vec(),
            mean_bias: m.params[l.mean_bias()].to_vec(),
            cholesky: (0..l.k).map(|j| m.cholesky(j)).collect(),
        }
    }

    fn into_model(self) -> Result<ConditionalMixture<T>> {
        if self.format != FORMAT_TAG || self.version != MIXTURE_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported mixture document {} v{}", self.format, self.version)));
        }
        let m = ConditionalMixture::from_parts(
            self.direction,
            self.standardization,
            self.gate_weights,
            self.gate_bias,
            self.mean_weights,
            self.mean_bias,
            self.cholesky,
            self.sigma_floor,
        )?;
        if m.layout != (Layout { k: self.k, target_dim: self.target_dim, cond_dim: self.cond_dim }) {
            return Err(Error::Config("mixture document header disagrees with its blocks".into()));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn unit_model(k: usize, d: usize, m: usize) -> ConditionalMixture<f64> {
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        ConditionalMixture::from_parts(
            Direction::ParamsGivenSummaries,
            Standardization::identity(d, m),
            vec![0.0; k * m],
            vec![0.0; k],
            vec![0.0; k * d * m],
            vec![0.0; k * d],
            vec![eye; k],
            1e-4,
        )
        .unwrap()
    }

    #[test]
    fn standard_gaussian_peak() {
        let model = unit_model(1, 2, 1);
        let v = model.log_density(&[0.0, 0.0], &[0.7]).unwrap();
        assert!((v + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn peak_includes_standardization_jacobian() {
        let mut model = unit_model(1, 1, 1);
        model.standardization.target_mean = vec![5.0];
        model.standardization.target_sd = vec![2.0];
        let v = model.log_density(&[5.0], &[0.0]).unwrap();
        assert!((v - (-0.5 * (2.0 * std::f64::consts::PI).ln() - 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn far_tail_is_finite() {
        let model = unit_model(3, 2, 1);
        let v = model.log_density(&[50.0, -50.0], &[0.0]).unwrap();
        assert!(v.is_finite() && v < -2000.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = unit_model(2, 2, 3);
        assert!(matches!(model.log_density(&[0.0], &[0.0; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(model.log_density(&[0.0, 0.0], &[0.0; 2]).is_err());
        assert!(model.sample(&[0.0], 3, &mut Stream::new(0).rng()).is_err());
    }

    #[test]
    fn one_hot_gating_selects_first_component() {
        let mut eye = vec![0.0f64; 1];
        eye[0] = 0.1;
        let model = ConditionalMixture::from_parts(
            Direction::ParamsGivenSummaries,
            Standardization::identity(1, 1),
            vec![0.0; 3],
            vec![0.0, -1e4, -1e4],
            vec![0.0; 3],
            vec![-10.0, 0.0, 10.0],
            vec![eye.clone(), eye.clone(), eye],
            1e-4,
        )
        .unwrap();
        let w = model.gating_weights(&[0.0]).unwrap();
        assert_eq!(w[0], 1.0);
        let draws = model.sample(&[0.0], 2000, &mut Stream::new(3).rng()).unwrap();
        assert!(draws.iter().all(|x| (x[0] + 10.0).abs() < 1.0));
    }

    #[test]
    fn json_round_trip_preserves_density() {
        let mut model = unit_model(2, 2, 2);
        let mut rng = Stream::new(5).rng();
        let p: Vec<f64> = model.params.iter().map(|_| 0.3 * std_normal(&mut rng)).collect();
        model = model.with_params(p).unwrap();
        let back = ConditionalMixture::<f64>::from_json(&model.to_json().unwrap()).unwrap();
        for x in [[0.1, -0.3], [1.2, 0.4]] {
            let a = model.log_density(&x, &[0.5, -1.0]).unwrap();
            let b = back.log_density(&x, &[0.5, -1.0]).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert!(ConditionalMixture::<f64>::from_json(&model.to_json().unwrap().replace("\"version\": 1", "\"version\": 9")).is_err());
    }

    #[test]
    fn single_precision_agrees_with_double() {
        let m64 = unit_model(2, 2, 1);
        let mut rng = Stream::new(6).rng();
        let p64: Vec<f64> = m64.params.iter().map(|_| 0.2 * std_normal(&mut rng)).collect();
        let m64 = m64.with_params(p64.clone()).unwrap();
        let m32 = ConditionalMixture::<f32>::from_raw(
            m64.layout,
            p64.iter().map(|&v| v as f32).collect(),
            1e-4,
            Direction::ParamsGivenSummaries,
            Standardization::identity(2, 1),
        )
        .unwrap();
        let a = m64.log_density(&[0.3, -0.2], &[0.4]).unwrap();
        let b = m32.log_density(&[0.3, -0.2], &[0.4]).unwrap();
        assert!((a - b as f64).abs() < 1e-5);
    }
}

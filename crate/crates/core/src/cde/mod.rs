//! Conditional Gaussian mixtures of experts and their maximum-likelihood training.
//!
//! A [`ConditionalMixture`] models `q(target | condition)` as
//! `sum_j pi_j(c) N(target; mu_j(c), L_j L_j^T)` with softmax-affine gates,
//! affine component means and condition-free Cholesky factors. The same class
//! serves posterior estimation (target = parameters, condition = summaries) and
//! likelihood estimation (target = summaries, condition = parameters).

mod fit;
mod mixture;
mod training;

pub use fit::{fit, FitConfig, FitReport};
pub use mixture::{ConditionalMixture, Layout, MIXTURE_FORMAT_VERSION};
pub use training::{Direction, Standardization, TrainingSet};

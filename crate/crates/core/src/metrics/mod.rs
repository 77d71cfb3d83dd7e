//! Sample-based evaluation of posterior approximations.

mod intervals;
mod kdtree;
mod kld;

pub use intervals::{coverage, credible_interval, posterior_mean_bias, weighted_quantile, CoverageReport, DEFAULT_LEVELS};
pub use kdtree::KdTree;
pub use kld::{gaussianity_kld, knn_kld, KLDEstimate};

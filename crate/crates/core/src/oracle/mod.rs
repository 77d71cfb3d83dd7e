//! Reference posteriors built from asymptotic Gaussian summary likelihoods, and
//! a tempered sequential Monte Carlo sampler to draw from them.

mod likelihood;
mod moments;
mod smc;

pub use likelihood::{oracle_log_posterior, GaussianSummaryLikelihood, COVARIANCE_JITTER};
pub use moments::{gk_order_stat_moments, ma2_moments};
pub use smc::{tempered_smc, TemperingConfig, TemperingSchedule};

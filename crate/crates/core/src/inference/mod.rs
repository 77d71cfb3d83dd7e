//! Posterior approximation engines: neural posterior and likelihood estimation
//! with mixture density models, random-walk Metropolis and ABC-SMC.

mod abc;
mod draws;
mod mcmc;
mod neural;

pub use abc::{abc_smc, ABCSMCConfig, AbcRun};
pub use draws::{config_hash, systematic_resample, DrawMeta, DrawSet, DRAWS_FORMAT_VERSION};
pub use mcmc::{metropolis_accept_prob, rwm_sample, MCMCConfig};
pub use neural::{run_nle, run_npe, sample_in_support, simulate_pairs, NeuralRun, MAX_TRUNCATION_FACTOR};

pub mod cde;
pub mod error;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use rng::Stream;
pub use scalar::Real;

pub type Mixture64 = cde::ConditionalMixture<f64>;
pub type Mixture32 = cde::ConditionalMixture<f32>;
pub type TrainingSet64 = cde::TrainingSet<f64>;
pub type TrainingSet32 = cde::TrainingSet<f32>;
pub type DrawSet64 = inference::DrawSet<f64>;
pub type DrawSet32 = inference::DrawSet<f32>;
pub type ModelSpec64 = models::ModelSpec<f64>;
pub type ModelSpec32 = models::ModelSpec<f32>;
pub type SummaryLikelihood64 = oracle::GaussianSummaryLikelihood<f64>;
pub type SummaryLikelihood32 = oracle::GaussianSummaryLikelihood<f32>;

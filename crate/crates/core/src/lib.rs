pub mod augment;
pub mod bench;
pub mod bundle;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod metrics;
mod math;
pub mod llmgen;
pub mod ood;
pub mod pipeline;
pub mod quality;
pub mod synthetic;
pub mod train;
mod rng;

pub use error::{Error, Result};

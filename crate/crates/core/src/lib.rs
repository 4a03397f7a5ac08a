pub mod autodiff;
pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod metrics;
pub mod models;
pub mod saliency;
pub mod textpipe;
pub mod trainer;

pub use error::{Error, Result};

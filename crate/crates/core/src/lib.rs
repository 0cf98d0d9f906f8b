//! Frame identification with a target encoder and a definition encoder,
//! trained coarse-to-fine with contrastive objectives.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod index;
pub mod lexicon;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};

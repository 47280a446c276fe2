pub mod channel;
pub mod checkpoint;
pub mod codec;
pub mod config;
pub mod dataset;
pub mod elbo;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod inference;
pub mod numerics;
pub mod phaseopt;
pub mod seeds;
pub mod signal;
pub mod vardist;

pub use error::{Error, Result};

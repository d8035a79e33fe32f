pub mod conditioning;
pub mod env;
pub mod error;
pub mod experiment;
pub mod gfn;
pub mod goalsampler;
pub mod metrics;
pub mod nnet;

pub use error::{Error, Result};

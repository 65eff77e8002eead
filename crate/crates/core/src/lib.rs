pub mod data;
pub mod error;
pub mod experiment;
pub mod integrators;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod optim;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use parallel::Execution;
pub use params::ParamSet;
pub use rng::RngStream;
pub use tensor::Tensor;

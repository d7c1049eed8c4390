pub mod cli;
pub mod crowdsim;
mod error;
pub mod eval;
pub mod numerics;
pub mod reward;
pub mod rng;
pub mod ssm;
pub mod vlearn;

pub use error::Error;

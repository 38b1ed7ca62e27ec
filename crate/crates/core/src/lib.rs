pub mod agent;
pub mod baselines;
pub mod env;
pub mod error;
pub mod experiment;
pub mod safelayer;
pub mod scenario;
pub mod thermal;

pub use error::{Error, Result};

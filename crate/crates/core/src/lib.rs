//! Rare-event estimators for sums of dependent log-normal random variables.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod lefttail;
pub mod model;
pub mod optimize;
pub mod righttail;
pub mod rng_qmc;
pub mod specfun;
pub mod stats;

pub use error::{Error, Result};
pub use model::{BlackScholesSpec, SlnModel};

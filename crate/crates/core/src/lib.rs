//! Subset Simulation for rare-event probabilities and its use for Bayesian
//! model updating through the driving variable `Y = ln[L(θ) / U]`.

pub mod bus;
pub mod cli;
pub mod error;
pub mod mcmc;
pub mod models;
pub mod normal;
pub mod oracles;
pub mod priors;
pub mod rng;
pub mod sus;

pub use error::{Error, Result};

//! Bayesian truncated Gaussian copula graphical models with a phylogenetic
//! tree prior on edge inclusion, for zero-inflated abundance data.

pub mod analyze;
pub mod cli;
pub mod config;
pub mod copula;
pub mod error;
pub mod geweke;
pub mod graph;
pub mod graph_prior;
pub mod io;
pub mod normal;
pub mod phylo_latent;
pub mod sampler;
pub mod simulate;
pub mod stats;
pub mod trace;
pub mod tree;

pub use error::{Error, Result};

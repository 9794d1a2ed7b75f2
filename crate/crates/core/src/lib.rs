//! Desk-scale laboratory for measuring how differentially private training
//! of a small next-token language model changes social bias, and how
//! counterfactual data augmentation counteracts it.

pub mod assets;
pub mod cda;
pub mod config;
pub mod corpus;
pub mod dp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod probes;
pub mod runner;
pub mod seed;
mod table;

pub use error::{Error, Result};

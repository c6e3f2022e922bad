//! Computational core for finite-state hidden Markov chains: exact sequence
//! probabilities, log-likelihood derivatives in the model parameter,
//! long-run variances and mixing profiles of the per-symbol increments, and
//! seeded Monte Carlo experiments on their large-sample behavior.

pub mod deriv;
pub mod error;
pub mod exec;
pub mod family;
pub mod hmm;
pub mod lab;
pub mod markov;
pub mod mle;
pub mod models;
pub mod numeric;
pub mod stats;

pub use error::{Error, Result};

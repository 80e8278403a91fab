//! Bayesian prediction-powered inference.
//!
//! The crate builds credible intervals for estimands of the form
//! g(theta_1, ..., theta_k) where each theta_i has a conjugate posterior
//! fitted from data. A Monte Carlo integration engine draws joint posterior
//! samples, evaluates g on each, and extracts equal-tailed intervals; a
//! bootstrap engine provides a frequentist cross-check. On top of that sit
//! the designed estimators (difference, power-tuned, stratified, chain
//! rule, side-by-side), partition learners for stratification, CSV data
//! handling, and synthetic worlds for coverage studies.

pub mod dataio;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod partition;
pub mod posterior;
pub mod rng;
pub mod synthcov;

pub use error::{Error, Result};

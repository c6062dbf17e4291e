//! Local surrogate explanations for black-box text classifiers.
//!
//! The crate is organised around the explanation pipeline:
//!
//! - [`textrepr`]: tokens, vocabularies, presence vectors and neighbourhood sampling
//! - [`data`]: corpora, splits, the synthetic generator, artificial features
//! - [`models`]: the [`ProbabilityModel`](models::ProbabilityModel) contract and built-in classifiers
//! - [`lime`]: kernel, surrogate dataset, K-LASSO and the baseline explainers
//! - [`pick`]: explanation matrix, coverage and greedy submodular pick
//! - [`evalsuite`]: simulated-user experiments

pub mod data;
pub mod error;
pub mod evalsuite;
pub mod lime;
pub mod linalg;
pub mod models;
pub mod pick;
pub mod seed;
pub mod textrepr;

pub use error::{Error, Result};

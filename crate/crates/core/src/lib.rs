//! Classifier-ensemble toolkit built around per-sample score matrices:
//! sum-rule fusion, floating subset search, regularized simplex weighting,
//! evaluation metrics, image resizing and a synthetic model-zoo lab.

pub mod cli;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod preprocess;
pub mod report;
pub mod selection;
pub mod toylab;
pub mod ws;
pub mod zoo;

pub use error::{Error, Result};
pub use zoo::{ClassMap, ScoreMatrix, Zoo};

//! Command-line front end for the elucidation-pretraining NER pipeline.

pub mod config;
pub mod error;
pub mod logger;
pub mod stages;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};

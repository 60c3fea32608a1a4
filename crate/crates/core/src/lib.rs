//! Sequence labeling with elucidation-augmented pre-training.
//!
//! The pipeline has three stages: an LLM writes a short elucidation for every
//! gold entity of a dataset ([`cote`]), a compact encoder is pre-trained on
//! those texts with a masked-language-model objective ([`encoder`], [`mlm`]),
//! and the encoder is fine-tuned under a linear-chain CRF for NER
//! ([`crf`], [`train`]). [`eval`] scores predictions at the entity level.

pub mod checkpoint;
pub mod cote;
pub mod crf;
pub mod data;
pub mod encoder;
mod error;
pub mod eval;
pub mod mlm;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

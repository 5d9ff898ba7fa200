//! Contrastive neuron scoring, editing and evaluation for small
//! decoder-only transformers.
//!
//! The pipeline: run a model over bias-eliciting (`X-`) and unbiased
//! (`X+`) prompts, measure how far each attention neuron moves the
//! final-token hidden state when it is zeroed, score every neuron by how
//! cleanly those responses separate the two sets, then deactivate or
//! enhance the selected neurons and re-evaluate.

pub mod ablation;
pub mod attn_analysis;
pub mod editing;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod scoring;
pub mod tensor;

pub use error::{Error, Result};

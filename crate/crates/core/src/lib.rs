//! Encoder-space adversarial sentence generation.
//!
//! A sentence is encoded by an LSTM into a fixed vector `z`; a small
//! feed-forward head classifies `z` and an LSTM decoder reconstructs the
//! sentence from it. Adversarial sentences are produced by a single
//! fast-gradient-sign step on `z` toward the opposite label, followed by
//! greedy decoding. A word-substitution saliency attack is provided as a
//! baseline, together with BLEU, n-gram perplexity and diff rendering.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, corpus
//! loading, the HTTP harness and the command line live in the `natadv`
//! companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attack;
pub mod autodiff;
mod error;
pub mod lm;
pub mod math;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

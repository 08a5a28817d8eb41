//! File formats, corpus loading, checkpoints, reports, the black-box
//! harness and the command-line driver around `natadv-core`.

pub mod blackbox;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
mod error;
pub mod formats;
pub mod manifest;
pub mod prepared;
pub mod report;

pub use error::{Error, Result};
pub use natadv_core as core;

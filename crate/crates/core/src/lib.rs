//! Gradient-imitation self-training for low-resource information extraction.
//!
//! The crate provides the numeric substrate (flat parameter vectors, reward,
//! optimizer, finite-difference oracle, PCA), three extraction task models
//! (named entities, relations, event graphs), the self-training loop and the
//! data utilities that feed it.

pub mod data;
pub mod ee;
pub mod encoder;
pub mod error;
pub mod girl;
pub mod head;
pub mod math;
pub mod metrics;
pub mod ner;
pub mod re;
pub mod task;

pub use error::{Error, Result};
pub use task::{gradient_check, TaskModel};

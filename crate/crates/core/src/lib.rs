//! Resolution-aware spoofed-speech detection.
//!
//! Audio is turned into three log-mel spectrograms (fine, medium, coarse),
//! each encoded by one shared convolutional network. Self-attention mixes
//! the three embeddings, their mean feeds a per-dataset logistic head, and
//! training adds a term pulling the bona fide embeddings of the three
//! resolutions together.

pub mod data;
pub mod dsp;
pub mod error;
mod label;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use label::Label;

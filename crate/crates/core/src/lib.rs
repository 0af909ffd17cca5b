//! Adversarial scrubbing of identity information from a shared convolutional
//! base while keeping it useful for emotion recognition.
//!
//! * [`autodiff`]: tensors, the reverse-mode tape, layer ops, SGD, and a
//!   finite-difference oracle.
//! * [`model`]: conv base + dense heads, freeze flags, weight persistence.
//! * [`trainer`]: single-task baselines, frozen-base probes, the alternating
//!   adversarial loop, and the five-accuracy evaluation protocol.
//! * [`dataset`]: synthetic faces, augmentation, grouped folds, PGM I/O.

pub mod autodiff;
pub mod dataset;
mod error;
pub mod model;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};

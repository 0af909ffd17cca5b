//! The four architectures (Emotion, Face, Emotion2Face, Hybrid) share one
//! decomposition: a [`ConvBase`] whose flattened output feeds one or more
//! dense [`Head`]s. Parameters live in [`ParamGroup`]s carrying freeze flags
//! and optimizer state.

mod config;
mod group;
mod hybrid;
mod layers;
mod metrics;

pub use config::{ModelConfig, StageShape};
pub use group::ParamGroup;
pub use hybrid::{load_head, save_head, Classifier, Group, HybridForward, HybridModel, MODEL_MANIFEST};
pub use layers::{argmax, Bound, ConvBase, ConvLayer, DenseLayer, Head, Module};
pub use metrics::{accuracy, accuracy_of_predictions, accuracy_on_features};

use crate::error::Result;

/// `head(flatten(base(image)))` as a probability vector.
pub fn predict(base: &ConvBase, head: &Head, pixels: &[f64]) -> Result<Vec<f64>> {
    head.predict(&base.features(pixels)?)
}

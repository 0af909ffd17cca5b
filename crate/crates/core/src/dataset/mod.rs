//! Labeled grayscale images, the synthetic face generator, augmentation,
//! grouped cross-validation folds, and on-disk PGM datasets.

mod augment;
mod folds;
mod pgm;
mod synthetic;

pub use augment::{augment, expand_corpus, flip_horizontal, rotate, AugmentConfig};
pub use folds::{make_group_folds, FoldPlan, Stratification};
pub use pgm::{load_dataset, load_dataset_with_classes, read_pgm, save_dataset, write_pgm, MANIFEST_FILE};
pub use synthetic::{generate_synthetic, EmotionFactors, FactorRange, IdentityFactors, Jitter, SyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square grayscale image with both labels and the id of the original it
/// descends from.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub size: usize,
    /// Row-major `size × size`, values in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub emotion: usize,
    pub identity: usize,
    pub group_id: u64,
}

impl LabeledImage {
    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Emotion => self.emotion,
            Task::Identity => self.identity,
        }
    }
}

/// Which label a classifier is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Emotion,
    Identity,
}

/// A corpus plus its class counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub num_emotions: usize,
    pub num_identities: usize,
    pub image_size: usize,
}

impl Dataset {
    pub fn new(images: Vec<LabeledImage>, num_emotions: usize, num_identities: usize) -> Result<Self> {
        let first = images.first().ok_or(Error::Empty("dataset"))?;
        let image_size = first.size;
        for img in &images {
            if img.size != image_size || img.pixels.len() != image_size * image_size {
                return Err(Error::shape(
                    "dataset",
                    format!("image of group {} is not {image_size}×{image_size}", img.group_id),
                ));
            }
            if img.emotion >= num_emotions {
                return Err(Error::LabelOutOfRange { label: img.emotion, classes: num_emotions });
            }
            if img.identity >= num_identities {
                return Err(Error::LabelOutOfRange { label: img.identity, classes: num_identities });
            }
        }
        Ok(Dataset { images, num_emotions, num_identities, image_size })
    }

    pub fn num_classes(&self, task: Task) -> usize {
        match task {
            Task::Emotion => self.num_emotions,
            Task::Identity => self.num_identities,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&LabeledImage> {
        indices.iter().map(|&i| &self.images[i]).collect()
    }
}

use super::layers::{argmax, ConvBase, Head};
use crate::dataset::{LabeledImage, Task};
use crate::error::{Error, Result};

/// Fraction of images whose argmax prediction matches the `task` label.
pub fn accuracy(base: &ConvBase, head: &Head, images: &[&LabeledImage], task: Task) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let mut correct = 0usize;
    for img in images {
        let probs = head.predict(&base.features(&img.pixels)?)?;
        correct += usize::from(argmax(&probs) == img.label(task));
    }
    Ok(correct as f64 / images.len() as f64)
}

/// Same as [`accuracy`] over precomputed feature vectors.
pub fn accuracy_on_features(head: &Head, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let mut correct = 0usize;
    for (f, &y) in features.iter().zip(labels) {
        correct += usize::from(argmax(&head.predict(f)?) == y);
    }
    Ok(correct as f64 / features.len() as f64)
}

/// Fraction of `predictions` equal to `labels`.
pub fn accuracy_of_predictions(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / predictions.len() as f64)
}

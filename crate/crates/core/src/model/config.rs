use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters. Input is a single-channel square image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub conv_channels: [usize; 3],
    pub hidden: [usize; 2],
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { input_size: 48, conv_channels: [8, 16, 32], hidden: [128, 64], seed: 0 }
    }
}

/// Spatial side length after each step of the conv stack.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageShape {
    pub conv: usize,
    /// Side after dropping an odd trailing row/column.
    pub cropped: usize,
    pub pooled: usize,
}

impl ModelConfig {
    /// Walks `input → conv → (drop odd edge) → pool` three times.
    pub fn shape_trace(&self) -> Result<Vec<StageShape>> {
        if self.conv_channels.contains(&0) || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must be positive: conv {:?}, hidden {:?}",
                self.conv_channels, self.hidden
            )));
        }
        let mut side = self.input_size;
        let mut trace: Vec<StageShape> = Vec::with_capacity(3);
        for stage in 0..3 {
            if side < 4 {
                let chain: Vec<String> = std::iter::once(self.input_size.to_string())
                    .chain(trace.iter().map(|s| format!("{}→{}→{}", s.conv, s.cropped, s.pooled)))
                    .collect();
                return Err(Error::Config(format!(
                    "input size {} too small: side {side} entering conv stage {} (trace {})",
                    self.input_size,
                    stage + 1,
                    chain.join(" | ")
                )));
            }
            let conv = side - 2;
            let cropped = conv - conv % 2;
            let pooled = cropped / 2;
            trace.push(StageShape { conv, cropped, pooled });
            side = pooled;
        }
        Ok(trace)
    }

    pub fn feature_len(&self) -> Result<usize> {
        let side = self.shape_trace()?[2].pooled;
        Ok(self.conv_channels[2] * side * side)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_trace().map(|_| ())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What happens to the identity head before each refit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReinitPolicy {
    /// Fresh random weights every iteration.
    Fresh,
    /// Continue from the previous identity head.
    Warm,
}

/// Stop the adversarial loop once the refit identity accuracy has stayed at or
/// below `chance + margin` for `patience` consecutive iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub patience: usize,
    pub margin: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop { patience: 3, margin: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the identity loss during multi-task initialization.
    pub alpha: f64,
    /// Weight of the (negated) identity loss during the adversarial phase.
    pub beta: f64,
    /// Outer adversarial iterations. Zero skips the loop entirely.
    #[serde(alias = "T")]
    pub iterations: usize,
    pub epochs_init: usize,
    pub epochs_adv: usize,
    pub epochs_refit: usize,
    pub epochs_probe: usize,
    pub learning_rate: f64,
    /// Learning rate for the base and emotion head while the identity loss is
    /// being maximized.
    pub adversarial_learning_rate: f64,
    /// Learning rate for probe heads trained on a frozen base.
    pub head_learning_rate: f64,
    /// Learning rate for the identity head during each refit.
    pub refit_learning_rate: f64,
    pub momentum: f64,
    pub adversarial_momentum: f64,
    pub batch_size: usize,
    pub reinit_policy: ReinitPolicy,
    pub early_stop: Option<EarlyStop>,
    /// Fraction of training groups held out to monitor the adversarial loop.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            beta: 1.0,
            iterations: 20,
            epochs_init: 10,
            epochs_adv: 1,
            epochs_refit: 3,
            epochs_probe: 20,
            learning_rate: 0.01,
            adversarial_learning_rate: 0.00005,
            head_learning_rate: 0.003,
            refit_learning_rate: 0.001,
            momentum: 0.9,
            adversarial_momentum: 0.9,
            batch_size: 32,
            reinit_policy: ReinitPolicy::Fresh,
            early_stop: None,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [("alpha", self.alpha), ("beta", self.beta)];
        for (name, v) in weights {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let counts = [
            ("epochs_init", self.epochs_init),
            ("epochs_adv", self.epochs_adv),
            ("epochs_refit", self.epochs_refit),
            ("epochs_probe", self.epochs_probe),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("adversarial_learning_rate", self.adversarial_learning_rate),
            ("head_learning_rate", self.head_learning_rate),
            ("refit_learning_rate", self.refit_learning_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("momentum", self.momentum), ("adversarial_momentum", self.adversarial_momentum)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction)));
        }
        if let Some(es) = &self.early_stop {
            if es.patience == 0 || !(es.margin.is_finite() && es.margin >= 0.0) {
                return Err(Error::Config("early_stop needs patience >= 1 and a non-negative margin".into()));
            }
        }
        Ok(())
    }
}

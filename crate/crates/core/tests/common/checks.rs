//! Protocol checks shared by the trainer tests and the acceptance run.

use rand::Rng;
use veil_core::autodiff::Graph;
use veil_core::dataset::{LabeledImage, Task};
use veil_core::model::{ConvBase, Group, Head, HybridModel, ModelConfig, Module, ParamGroup};
use veil_core::seed::rng_from;
use veil_core::trainer::{adversarial_phase, finetune_head_frozen_base, identity_refit_phase, TrainConfig};

pub const EMOTIONS: usize = 4;
pub const IDENTITIES: usize = 10;

pub fn bits<M: Module>(m: &M) -> Vec<u64> {
    m.params().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
}

/// Uniform-noise images with random labels.
pub fn noise_images(rng: &mut impl Rng, n: usize, size: usize) -> Vec<LabeledImage> {
    (0..n)
        .map(|i| LabeledImage {
            size,
            pixels: (0..size * size).map(|_| rng.gen::<f64>()).collect(),
            emotion: rng.gen_range(0..EMOTIONS),
            identity: rng.gen_range(0..IDENTITIES),
            group_id: i as u64,
        })
        .collect()
}

/// Runs one adversarial step (plain SGD, unit rate) over a random batch and
/// compares the base and emotion-head updates against `grad L_e − β grad L_i`
/// assembled from separate backward passes. Returns the largest elementwise
/// gap.
pub fn eq2_gradient_gap(seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let batch = noise_images(&mut rng, 8, 48);
    let refs: Vec<&LabeledImage> = batch.iter().collect();
    let beta = rng.gen_range(0.25..2.0);
    let mut model = HybridModel::new(&ModelConfig::default(), EMOTIONS, IDENTITIES, seed).unwrap();
    model.set_frozen(Group::IdentityHead, true);
    let before = model.clone();

    // Independent passes: one tape per loss per image.
    let mut le_model = before.clone();
    let mut li_model = before.clone();
    for img in &batch {
        for (target, task) in [(&mut le_model, Task::Emotion), (&mut li_model, Task::Identity)] {
            let (fwd, grads) = {
                let mut g = Graph::new();
                let fwd = before.forward(&mut g, &img.pixels).unwrap();
                let loss = match task {
                    Task::Emotion => g.cross_entropy(fwd.emotion, img.emotion).unwrap(),
                    Task::Identity => g.cross_entropy(fwd.identity, img.identity).unwrap(),
                };
                (fwd, g.backward(loss).unwrap())
            };
            target.accumulate(&fwd, &grads).unwrap();
        }
    }

    let config = TrainConfig {
        beta,
        batch_size: batch.len(),
        epochs_adv: 1,
        adversarial_learning_rate: 1.0,
        adversarial_momentum: 0.0,
        ..Default::default()
    };
    adversarial_phase(&mut model, &refs, &config, seed, 1).unwrap();

    let n = batch.len() as f64;
    let mut gap: f64 = 0.0;
    let pairs = [
        (before.base.params(), model.base.params(), le_model.base.params(), li_model.base.params(), beta),
        (before.emotion_head.params(), model.emotion_head.params(), le_model.emotion_head.params(), li_model.emotion_head.params(), 0.0),
    ];
    for (old, new, ge, gi, b) in pairs {
        for (((o, w), e), i) in old.iter().zip(&new).zip(&ge).zip(&gi) {
            let zeros = vec![0.0; o.len()];
            let (e, i) = (e.grad().unwrap_or(&zeros), i.grad().unwrap_or(&zeros));
            for k in 0..o.len() {
                let applied = o.data()[k] - w.data()[k];
                let expected = (e[k] - b * i[k]) / n;
                gap = gap.max((applied - expected).abs());
            }
        }
    }
    gap
}

/// Why a freeze check failed, if it did.
pub type Violation = Option<String>;

fn model_for(seed: u64) -> HybridModel {
    HybridModel::new(&ModelConfig::default(), EMOTIONS, IDENTITIES, seed).unwrap()
}

fn random_config(rng: &mut impl Rng) -> TrainConfig {
    TrainConfig {
        alpha: rng.gen_range(0.0..2.0),
        beta: rng.gen_range(0.0..2.0),
        batch_size: 1,
        epochs_adv: 1,
        epochs_refit: 1,
        epochs_probe: 1,
        learning_rate: rng.gen_range(1e-3..1e-1),
        adversarial_learning_rate: rng.gen_range(1e-4..1e-2),
        refit_learning_rate: rng.gen_range(1e-3..1e-1),
        head_learning_rate: rng.gen_range(1e-3..1e-1),
        momentum: rng.gen_range(0.0..0.95),
        adversarial_momentum: rng.gen_range(0.0..0.95),
        ..Default::default()
    }
}

/// 50 single-image adversarial steps: the identity head must not move.
pub fn adversarial_freeze(seed: u64) -> Violation {
    let mut rng = rng_from(seed);
    let images = noise_images(&mut rng, 50, 48);
    let refs: Vec<&LabeledImage> = images.iter().collect();
    let config = random_config(&mut rng);
    let mut model = model_for(seed);
    model.set_frozen(Group::IdentityHead, true);
    let (wi, wc) = (bits(model.identity_head.module()), bits(model.base.module()));
    adversarial_phase(&mut model, &refs, &config, seed, 1).unwrap();
    if bits(model.identity_head.module()) != wi {
        return Some("identity head changed during the adversarial phase".into());
    }
    if bits(model.base.module()) == wc {
        return Some("base did not train during the adversarial phase".into());
    }
    None
}

/// 50 single-image refit steps: base and emotion head must not move.
pub fn refit_freeze(seed: u64) -> Violation {
    let mut rng = rng_from(seed);
    let images = noise_images(&mut rng, 55, 48);
    let refs: Vec<&LabeledImage> = images.iter().collect();
    let (fit, val) = refs.split_at(50);
    let config = random_config(&mut rng);
    let mut model = model_for(seed);
    model.set_frozen(Group::Base, true);
    model.set_frozen(Group::EmotionHead, true);
    let (wc, we) = (bits(model.base.module()), bits(model.emotion_head.module()));
    identity_refit_phase(&mut model, fit, val, &config, seed).unwrap();
    if bits(model.base.module()) != wc || bits(model.emotion_head.module()) != we {
        return Some("base or emotion head changed during the identity refit".into());
    }
    None
}

/// 50 single-image probe steps on a frozen base: only the fresh head moves.
pub fn probe_freeze(seed: u64) -> Violation {
    let mut rng = rng_from(seed);
    let images = noise_images(&mut rng, 50, 48);
    let refs: Vec<&LabeledImage> = images.iter().collect();
    let config = random_config(&mut rng);
    let config_m = ModelConfig::default();
    let mut base = ParamGroup::new(ConvBase::new(&config_m, seed).unwrap());
    base.set_frozen(true);
    let wc = bits(base.module());
    let fresh = Head::new(&config_m, IDENTITIES, seed ^ 1).unwrap();
    let head = finetune_head_frozen_base(&base, fresh.clone(), &refs, Task::Identity, &config, seed).unwrap();
    if bits(base.module()) != wc {
        return Some("base changed while fitting a probe".into());
    }
    if bits(&head) == bits(&fresh) {
        return Some("probe head did not train".into());
    }
    None
}

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::{ReinitPolicy, TrainConfig};
use super::trace::{InitRecord, IterationRecord, LoopTrace};
use crate::autodiff::Graph;
use crate::dataset::{LabeledImage, Task};
use crate::error::{Error, Result};
use crate::model::{accuracy_on_features, argmax, Classifier, ConvBase, Group, Head, HybridModel, Module, ParamGroup};
use crate::seed::{derive_seed, rng_from};

/// Any mini-batch objective beyond this magnitude aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Means over one epoch of per-sample losses and running accuracies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub loss_emotion: f64,
    pub loss_identity: f64,
    /// Mean of the weighted objective actually minimized.
    pub objective: f64,
    pub acc_emotion: f64,
    pub acc_identity: f64,
}

/// What one identity refit measured.
#[derive(Clone, Debug, PartialEq)]
pub struct RefitOutcome {
    /// The previous identity head on the current base, before re-initialization.
    pub prior_train: f64,
    pub train: f64,
    pub val: f64,
}

#[derive(Default)]
struct Running {
    n: usize,
    loss_e: f64,
    loss_i: f64,
    objective: f64,
    hit_e: usize,
    hit_i: usize,
}

impl Running {
    fn finish(&self) -> EpochStats {
        let n = self.n.max(1) as f64;
        EpochStats {
            loss_emotion: self.loss_e / n,
            loss_identity: self.loss_i / n,
            objective: self.objective / n,
            acc_emotion: self.hit_e as f64 / n,
            acc_identity: self.hit_i as f64 / n,
        }
    }
}

fn divergence(loss: f64, phase: &'static str, iteration: usize) -> Error {
    Error::Divergence { loss, phase, iteration, trace: Box::default() }
}

fn guard(loss: f64, phase: &'static str, iteration: usize) -> Result<()> {
    if loss.is_finite() && loss.abs() <= DIVERGENCE_LIMIT {
        Ok(())
    } else {
        Err(divergence(loss, phase, iteration))
    }
}

fn shuffled(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

fn check_labels(images: &[&LabeledImage], task: Task, classes: usize) -> Result<()> {
    match images.iter().find(|img| img.label(task) >= classes) {
        Some(img) => Err(Error::LabelOutOfRange { label: img.label(task), classes }),
        None => Ok(()),
    }
}

fn non_empty(images: &[&LabeledImage], what: &'static str) -> Result<()> {
    if images.is_empty() {
        Err(Error::Empty(what))
    } else {
        Ok(())
    }
}

/// Feature vectors of `images` under `base`.
pub fn extract_features(base: &ConvBase, images: &[&LabeledImage]) -> Result<Vec<Vec<f64>>> {
    images.iter().map(|img| base.features(&img.pixels)).collect()
}

/// One pass of mini-batch SGD over the hybrid model on
/// `emotion_weight·L_e + identity_weight·L_i`. Frozen groups keep their values.
fn hybrid_epoch(
    model: &mut HybridModel,
    images: &[&LabeledImage],
    weights: (f64, f64),
    (learning_rate, momentum): (f64, f64),
    config: &TrainConfig,
    rng: &mut impl Rng,
    phase: &'static str,
    iteration: usize,
) -> Result<EpochStats> {
    let mut run = Running::default();
    for batch in shuffled(images.len(), rng).chunks(config.batch_size) {
        let scale = 1.0 / batch.len() as f64;
        let mut objective = 0.0;
        for &i in batch {
            let img = images[i];
            let (fwd, grads) = {
                let mut g = Graph::new();
                let fwd = model.forward(&mut g, &img.pixels)?;
                let le = g.cross_entropy(fwd.emotion, img.emotion)?;
                let li = g.cross_entropy(fwd.identity, img.identity)?;
                let a = g.scale(le, weights.0 * scale);
                let b = g.scale(li, weights.1 * scale);
                let total = g.add(a, b)?;
                let (le, li) = (g.scalar(le).unwrap_or(0.0), g.scalar(li).unwrap_or(0.0));
                run.loss_e += le;
                run.loss_i += li;
                objective += weights.0 * le + weights.1 * li;
                run.hit_e += usize::from(argmax(g.value(fwd.emotion)) == img.emotion);
                run.hit_i += usize::from(argmax(g.value(fwd.identity)) == img.identity);
                (fwd, g.backward(total)?)
            };
            model.accumulate(&fwd, &grads)?;
        }
        run.n += batch.len();
        run.objective += objective;
        guard(objective * scale, phase, iteration)?;
        model.step(learning_rate, momentum)?;
    }
    Ok(run.finish())
}

/// Trains base and head of a single-task classifier for `epochs_init` epochs.
/// Returns per-epoch statistics; the task's loss and accuracy land in the
/// emotion or identity slots accordingly.
pub fn train_single_task(
    model: &mut Classifier,
    images: &[&LabeledImage],
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    non_empty(images, "training split")?;
    check_labels(images, model.task, model.head.num_classes())?;
    let task = model.task;
    let mut rng = rng_from(seed);
    let mut history = Vec::with_capacity(config.epochs_init);
    for _ in 0..config.epochs_init {
        let mut run = Running::default();
        for batch in shuffled(images.len(), &mut rng).chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut objective = 0.0;
            for &i in batch {
                let img = images[i];
                let label = img.label(task);
                let (base_bound, head_bound, grads) = {
                    let mut g = Graph::new();
                    let (features, base_bound) = model.base.forward_image(&mut g, &img.pixels)?;
                    let (probs, head_bound) = model.head.forward(&mut g, features)?;
                    let loss = g.cross_entropy(probs, label)?;
                    let scaled = g.scale(loss, scale);
                    let value = g.scalar(loss).unwrap_or(0.0);
                    objective += value;
                    let hit = usize::from(argmax(g.value(probs)) == label);
                    if task == Task::Emotion {
                        run.loss_e += value;
                        run.hit_e += hit;
                    } else {
                        run.loss_i += value;
                        run.hit_i += hit;
                    }
                    (base_bound, head_bound, g.backward(scaled)?)
                };
                model.base.accumulate(&base_bound, &grads)?;
                model.head.accumulate(&head_bound, &grads)?;
            }
            run.n += batch.len();
            run.objective += objective;
            guard(objective * scale, "single_task", 0)?;
            model.base.step(config.learning_rate, config.momentum)?;
            model.head.step(config.learning_rate, config.momentum)?;
        }
        history.push(run.finish());
    }
    Ok(history)
}

/// Trains a dense head on fixed feature vectors. Returns the final-epoch
/// training accuracy (measured after the last update).
pub fn train_head_on_features(
    head: &mut ParamGroup<Head>,
    features: &[Vec<f64>],
    labels: &[usize],
    epochs: usize,
    learning_rate: f64,
    config: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::Empty("head training set"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= head.num_classes()) {
        return Err(Error::LabelOutOfRange { label: y, classes: head.num_classes() });
    }
    let len = head.input_len();
    let mut rng = rng_from(seed);
    for _ in 0..epochs {
        for batch in shuffled(features.len(), &mut rng).chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut objective = 0.0;
            for &i in batch {
                let (bound, grads) = {
                    let mut g = Graph::new();
                    let x = g.constant(&features[i], vec![len])?;
                    let (probs, bound) = head.forward(&mut g, x)?;
                    let loss = g.cross_entropy(probs, labels[i])?;
                    objective += g.scalar(loss).unwrap_or(0.0);
                    let scaled = g.scale(loss, scale);
                    (bound, g.backward(scaled)?)
                };
                head.accumulate(&bound, &grads)?;
            }
            guard(objective * scale, "head", 0)?;
            head.step(learning_rate, config.momentum)?;
        }
    }
    accuracy_on_features(head, features, labels)
}

/// Fits a head on a frozen base for `epochs_probe` epochs. The base is only
/// read; features are computed once.
pub fn finetune_head_frozen_base(
    base: &ParamGroup<ConvBase>,
    head: Head,
    images: &[&LabeledImage],
    task: Task,
    config: &TrainConfig,
    seed: u64,
) -> Result<Head> {
    if !base.is_frozen() {
        return Err(Error::Protocol("fine-tuning a head requires a frozen base".into()));
    }
    config.validate()?;
    non_empty(images, "training split")?;
    check_labels(images, task, head.num_classes())?;
    let features = extract_features(base, images)?;
    let labels: Vec<usize> = images.iter().map(|img| img.label(task)).collect();
    let mut group = ParamGroup::new(head);
    train_head_on_features(&mut group, &features, &labels, config.epochs_probe, config.head_learning_rate, config, seed)?;
    Ok(group.into_module())
}

/// Minimizes `L_e + α·L_i` over every parameter group for `epochs_init` epochs.
pub fn multitask_init(
    model: &mut HybridModel,
    images: &[&LabeledImage],
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    non_empty(images, "training split")?;
    check_labels(images, Task::Emotion, model.emotion_head.num_classes())?;
    check_labels(images, Task::Identity, model.identity_head.num_classes())?;
    for group in [Group::Base, Group::EmotionHead, Group::IdentityHead] {
        model.set_frozen(group, false);
    }
    model.reset_optimizers();
    let mut rng = rng_from(seed);
    (0..config.epochs_init)
        .map(|_| hybrid_epoch(model, images, (1.0, config.alpha), (config.learning_rate, config.momentum), config, &mut rng, "multitask_init", 0))
        .collect()
}

/// Minimizes `L_e − β·L_i` over the base and emotion head for `epochs_adv`
/// epochs. The identity head must already be frozen; its gradients still
/// reach the base.
pub fn adversarial_phase(
    model: &mut HybridModel,
    images: &[&LabeledImage],
    config: &TrainConfig,
    seed: u64,
    iteration: usize,
) -> Result<Vec<EpochStats>> {
    if !model.is_frozen(Group::IdentityHead) {
        return Err(Error::Protocol("adversarial phase requires a frozen identity head".into()));
    }
    non_empty(images, "training split")?;
    model.reset_optimizers();
    let mut rng = rng_from(seed);
    (0..config.epochs_adv)
        .map(|_| hybrid_epoch(model, images, (1.0, -config.beta), (config.adversarial_learning_rate, config.adversarial_momentum), config, &mut rng, "adversarial", iteration))
        .collect()
}

/// Re-initializes (per policy) and retrains the identity head on the frozen
/// base for `epochs_refit` epochs, then measures it on `val`.
pub fn identity_refit_phase(
    model: &mut HybridModel,
    fit: &[&LabeledImage],
    val: &[&LabeledImage],
    config: &TrainConfig,
    seed: u64,
) -> Result<RefitOutcome> {
    if !model.is_frozen(Group::Base) || !model.is_frozen(Group::EmotionHead) {
        return Err(Error::Protocol("identity refit requires a frozen base and emotion head".into()));
    }
    non_empty(fit, "refit split")?;
    non_empty(val, "refit validation split")?;
    let features = extract_features(&model.base, fit)?;
    let labels: Vec<usize> = fit.iter().map(|img| img.identity).collect();
    let prior_train = accuracy_on_features(&model.identity_head, &features, &labels)?;

    if config.reinit_policy == ReinitPolicy::Fresh {
        model.reinit_head(Group::IdentityHead, derive_seed(seed, &[&"init"]))?;
    }
    model.identity_head.reset_optimizer();
    model.set_frozen(Group::IdentityHead, false);
    let train = train_head_on_features(
        &mut model.identity_head,
        &features,
        &labels,
        config.epochs_refit,
        config.refit_learning_rate,
        config,
        derive_seed(seed, &[&"train"]),
    )?;
    if model.identity_head.params().iter().all(|p| p.norm() == 0.0) {
        return Err(Error::Protocol("identity head collapsed to all-zero weights".into()));
    }

    let val_features = extract_features(&model.base, val)?;
    let val_labels: Vec<usize> = val.iter().map(|img| img.identity).collect();
    let val = accuracy_on_features(&model.identity_head, &val_features, &val_labels)?;
    Ok(RefitOutcome { prior_train, train, val })
}

/// Multi-task initialization followed by `iterations` rounds of adversarial
/// phase and identity refit. `fit` drives training; `val` is only measured.
/// Every parameter group is frozen on return.
pub fn run_algorithm1(
    model: &mut HybridModel,
    fit: &[&LabeledImage],
    val: &[&LabeledImage],
    config: &TrainConfig,
    seed: u64,
) -> Result<LoopTrace> {
    let mut trace = LoopTrace::default();
    let attach = |e: Error, trace: &LoopTrace| match e {
        Error::Divergence { loss, phase, iteration, .. } => {
            Error::Divergence { loss, phase, iteration, trace: Box::new(trace.clone()) }
        }
        other => other,
    };
    non_empty(val, "validation split")?;
    let init = multitask_init(model, fit, config, derive_seed(seed, &[&"init"])).map_err(|e| attach(e, &trace))?;
    for group in [Group::Base, Group::EmotionHead, Group::IdentityHead] {
        model.set_frozen(group, true);
    }

    let fit_identity: Vec<usize> = fit.iter().map(|img| img.identity).collect();
    let val_emotion: Vec<usize> = val.iter().map(|img| img.emotion).collect();
    let val_identity: Vec<usize> = val.iter().map(|img| img.identity).collect();
    let last = init.last().cloned().unwrap_or_default();
    let val_features = extract_features(&model.base, val)?;
    let mut identity_train =
        accuracy_on_features(&model.identity_head, &extract_features(&model.base, fit)?, &fit_identity)?;
    trace.init = Some(InitRecord {
        loss_emotion: last.loss_emotion,
        identity_train,
        loss_identity: last.loss_identity,
        emotion_val: accuracy_on_features(&model.emotion_head, &val_features, &val_emotion)?,
        identity_val: accuracy_on_features(&model.identity_head, &val_features, &val_identity)?,
    });

    let chance = 1.0 / model.identity_head.num_classes() as f64;
    let mut plateau = 0;
    for t in 1..=config.iterations {
        model.set_frozen(Group::Base, false);
        model.set_frozen(Group::EmotionHead, false);
        model.set_frozen(Group::IdentityHead, true);
        let adv = adversarial_phase(model, fit, config, derive_seed(seed, &[&t, &"adversarial"]), t)
            .map_err(|e| attach(e, &trace))?;
        let adv = adv.last().cloned().unwrap_or_default();

        model.set_frozen(Group::Base, true);
        model.set_frozen(Group::EmotionHead, true);
        let refit = identity_refit_phase(model, fit, val, config, derive_seed(seed, &[&t, &"refit"]))?;
        model.set_frozen(Group::IdentityHead, true);

        let val_features = extract_features(&model.base, val)?;
        trace.records.push(IterationRecord {
            t,
            loss_emotion: adv.loss_emotion,
            loss_identity: adv.loss_identity,
            emotion_train: adv.acc_emotion,
            emotion_val: accuracy_on_features(&model.emotion_head, &val_features, &val_emotion)?,
            identity_refit_train: refit.train,
            identity_refit_val: refit.val,
            identity_before_adv: identity_train,
            identity_after_adv: refit.prior_train,
        });
        identity_train = refit.train;

        if let Some(stop) = &config.early_stop {
            plateau = if refit.val <= chance + stop.margin { plateau + 1 } else { 0 };
            if plateau >= stop.patience {
                trace.stopped_early = true;
                break;
            }
        }
    }
    Ok(trace)
}

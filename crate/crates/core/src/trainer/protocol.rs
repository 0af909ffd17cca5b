use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::phases::{extract_features, run_algorithm1, train_head_on_features, train_single_task};
use super::report::{Accuracies, FoldFailure, FoldResult, RunReport};
use super::trace::LoopTrace;
use crate::dataset::{Dataset, FoldPlan, LabeledImage, Task};
use crate::error::{Error, Result};
use crate::model::{accuracy_on_features, Classifier, ConvBase, Head, HybridModel, ModelConfig, ParamGroup};
use crate::seed::{derive_seed, rng_from};

/// Train and test images of one fold, plus the class counts.
#[derive(Clone, Debug)]
pub struct FoldSplit<'a> {
    pub fold: usize,
    pub num_emotions: usize,
    pub num_identities: usize,
    pub train: Vec<&'a LabeledImage>,
    pub test: Vec<&'a LabeledImage>,
}

impl<'a> FoldSplit<'a> {
    pub fn new(dataset: &'a Dataset, plan: &FoldPlan, fold: usize) -> Result<Self> {
        let (train, test) = plan.split(fold, &dataset.images)?;
        if train.is_empty() || test.is_empty() {
            return Err(Error::Empty("fold split"));
        }
        Ok(FoldSplit {
            fold,
            num_emotions: dataset.num_emotions,
            num_identities: dataset.num_identities,
            train: dataset.select(&train),
            test: dataset.select(&test),
        })
    }

    pub fn num_classes(&self, task: Task) -> usize {
        match task {
            Task::Emotion => self.num_emotions,
            Task::Identity => self.num_identities,
        }
    }

    /// Seed for one stage of this fold.
    pub fn stage_seed(&self, root: u64, stage: &str) -> u64 {
        derive_seed(root, &[&self.fold, &stage])
    }
}

/// Splits images by group into `(fit, val)`, holding out about `fraction` of
/// each identity's groups (at least one, never all).
pub fn holdout_groups<'a>(
    images: &[&'a LabeledImage],
    fraction: f64,
    seed: u64,
) -> (Vec<&'a LabeledImage>, Vec<&'a LabeledImage>) {
    let mut by_identity: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for img in images {
        let groups = by_identity.entry(img.identity).or_default();
        if !groups.contains(&img.group_id) {
            groups.push(img.group_id);
        }
    }
    let mut rng = rng_from(derive_seed(seed, &[&"holdout"]));
    let mut held = std::collections::HashSet::new();
    for groups in by_identity.values_mut() {
        if groups.len() < 2 {
            continue;
        }
        groups.sort_unstable();
        groups.shuffle(&mut rng);
        let n = ((groups.len() as f64 * fraction).round() as usize).clamp(1, groups.len() - 1);
        held.extend(groups[..n].iter().copied());
    }
    images.iter().partition(|img| !held.contains(&img.group_id))
}

/// Trains a single-task baseline (Face or Emotion) and returns it with its
/// test accuracy.
pub fn train_baseline(
    split: &FoldSplit,
    task: Task,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(Classifier, f64)> {
    let stage = match task {
        Task::Emotion => "emotion",
        Task::Identity => "face",
    };
    let seed = split.stage_seed(config.seed, stage);
    let mut model = Classifier::new(model_config, task, split.num_classes(task), derive_seed(seed, &[&"model"]))?;
    train_single_task(&mut model, &split.train, config, derive_seed(seed, &[&"train"]))?;
    let features = extract_features(&model.base, &split.test)?;
    let acc = accuracy_on_features(&model.head, &features, &labels(&split.test, task))?;
    Ok((model, acc))
}

/// A fresh head trained on a frozen base and scored on the fold's test set.
///
/// Head init and shuffling depend only on the fold and `task`, so identity
/// probes on different bases see identical heads and sample order.
pub fn probe_head(
    base: &ConvBase,
    split: &FoldSplit,
    task: Task,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(Head, f64)> {
    let seed = split.stage_seed(config.seed, &format!("probe_{}", task_name(task)));
    let frozen_features = extract_features(base, &split.train)?;
    let mut head = ParamGroup::new(Head::new(model_config, split.num_classes(task), derive_seed(seed, &[&"model"]))?);
    train_head_on_features(
        &mut head,
        &frozen_features,
        &labels(&split.train, task),
        config.epochs_probe,
        config.head_learning_rate,
        config,
        derive_seed(seed, &[&"train"]),
    )?;
    let test_features = extract_features(base, &split.test)?;
    let acc = accuracy_on_features(&head, &test_features, &labels(&split.test, task))?;
    Ok((head.into_module(), acc))
}

/// Runs the adversarial loop on the fold's training images, monitoring on a
/// group-disjoint slice of them.
pub fn train_hybrid(split: &FoldSplit, model_config: &ModelConfig, config: &TrainConfig) -> Result<(HybridModel, LoopTrace)> {
    config.validate()?;
    let seed = split.stage_seed(config.seed, "hybrid");
    let (fit, val) = holdout_groups(&split.train, config.val_fraction, seed);
    let mut model =
        HybridModel::new(model_config, split.num_emotions, split.num_identities, derive_seed(seed, &[&"model"]))?;
    let trace = run_algorithm1(&mut model, &fit, &val, config, derive_seed(seed, &[&"loop"]))?;
    Ok((model, trace))
}

/// Everything one fold produces.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub accuracies: Accuracies,
    pub trace: LoopTrace,
}

/// Face, Emotion, Emotion2Face, the adversarial loop and both probes.
pub fn evaluate_fold(split: &FoldSplit, model_config: &ModelConfig, config: &TrainConfig) -> Result<FoldOutcome> {
    let (_, face) = train_baseline(split, Task::Identity, model_config, config)?;
    let (emotion_model, emotion) = train_baseline(split, Task::Emotion, model_config, config)?;
    let (_, emotion2face) = probe_head(&emotion_model.base, split, Task::Identity, model_config, config)?;
    let (hybrid, trace) = train_hybrid(split, model_config, config)?;
    let (_, hybrid2emotion) = probe_head(&hybrid.base, split, Task::Emotion, model_config, config)?;
    let (_, hybrid2face) = probe_head(&hybrid.base, split, Task::Identity, model_config, config)?;
    Ok(FoldOutcome { accuracies: Accuracies { face, emotion, emotion2face, hybrid2emotion, hybrid2face }, trace })
}

/// Runs every fold in order. A failing fold is recorded and skipped; the mean
/// covers completed folds only.
pub fn evaluate_protocol(
    dataset: &Dataset,
    plan: &FoldPlan,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<RunReport> {
    model_config.validate()?;
    config.validate()?;
    let mut folds = Vec::new();
    let mut failures = Vec::new();
    for fold in 0..plan.k() {
        match FoldSplit::new(dataset, plan, fold).and_then(|s| evaluate_fold(&s, model_config, config)) {
            Ok(outcome) => folds.push(FoldResult { fold, accuracies: outcome.accuracies }),
            Err(e) => failures.push(FoldFailure::new(fold, &e)),
        }
    }
    Ok(RunReport::new(config.seed, folds, failures))
}

fn labels(images: &[&LabeledImage], task: Task) -> Vec<usize> {
    images.iter().map(|img| img.label(task)).collect()
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Emotion => "emotion",
        Task::Identity => "identity",
    }
}

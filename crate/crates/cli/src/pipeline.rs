use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use veil_core::dataset::{expand_corpus, generate_synthetic, load_dataset, make_group_folds, Dataset, FoldPlan, Task};
use veil_core::model::{save_head, Classifier, HybridModel, ModelConfig};
use veil_core::seed::derive_seed;
use veil_core::trainer::{probe_head, train_baseline, train_hybrid, FoldSplit, LoopTrace, TrainConfig};

use crate::config::{DataSource, RunConfig, ECHO_FILE};
use crate::error::{CliError, Result};

/// Completion marker and per-stage numbers; written last.
pub const METRICS_FILE: &str = "metrics.json";
pub const FAILURE_FILE: &str = "failure.json";
pub const DATASET_INFO_FILE: &str = "dataset.json";
pub const FOLDS_FILE: &str = "folds.json";
pub const TRACE_CSV: &str = "trace.csv";
pub const TRACE_JSON: &str = "trace.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Face,
    Emotion,
    Emotion2face,
    Hybrid,
    Probe,
    All,
}

impl Stage {
    pub const PIPELINE: [Stage; 5] = [Stage::Face, Stage::Emotion, Stage::Emotion2face, Stage::Hybrid, Stage::Probe];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Face => "face",
            Stage::Emotion => "emotion",
            Stage::Emotion2face => "emotion2face",
            Stage::Hybrid => "hybrid",
            Stage::Probe => "probe",
            Stage::All => "all",
        }
    }

    /// The stage whose saved model this one reads.
    pub fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Emotion2face => Some(Stage::Emotion),
            Stage::Probe => Some(Stage::Hybrid),
            _ => None,
        }
    }

    fn expand(self) -> Vec<Stage> {
        match self {
            Stage::All => Stage::PIPELINE.to_vec(),
            s => vec![s],
        }
    }
}

pub type Metrics = BTreeMap<String, f64>;

/// Class counts and size of the corpus the folds were cut from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub images: usize,
    pub num_emotions: usize,
    pub num_identities: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub code: String,
    pub message: String,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

pub fn fold_dir(out: &Path, seed: u64, fold: usize) -> PathBuf {
    seed_dir(out, seed).join(format!("fold-{fold}"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| CliError::config(path, e))
}

/// Writes through a temporary file so readers never see half a file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("plain data");
    s.push('\n');
    write_atomic(path, &s)
}

/// Builds the image corpus the config describes, expanded if requested.
pub fn load_corpus(config: &RunConfig) -> Result<Dataset> {
    let dataset = match &config.data {
        DataSource::Path(p) => load_dataset(p)?,
        DataSource::Synthetic(s) => Dataset::new(generate_synthetic(s)?, s.num_emotions, s.num_identities)?,
    };
    if dataset.image_size != config.model.input_size {
        return Err(CliError::Usage(format!(
            "images are {0}x{0} but the model expects {1}x{1}",
            dataset.image_size, config.model.input_size
        )));
    }
    match &config.augment {
        None => Ok(dataset),
        Some(aug) => {
            let images = expand_corpus(&dataset.images, aug, config.augment_seed)?;
            Ok(Dataset::new(images, dataset.num_emotions, dataset.num_identities)?)
        }
    }
}

fn stage_done(fold: &Path, stage: Stage) -> bool {
    fold.join(stage.name()).join(METRICS_FILE).is_file()
}

/// Echoes the config, refusing to mix two different configs in one
/// directory.
fn prepare_output(config: &RunConfig) -> Result<()> {
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let echo_path = out.join(ECHO_FILE);
    let echo = config.echo();
    if echo_path.is_file() {
        let existing: serde_json::Value = read_json(&echo_path)?;
        if existing != echo {
            return Err(CliError::config(
                &echo_path,
                "output directory holds a run with a different resolved config; use a fresh output_dir",
            ));
        }
        return Ok(());
    }
    write_json(&echo_path, &echo)
}

/// What a `run` did.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    /// (seed, fold, stage) for every stage executed rather than resumed.
    pub executed: Vec<(u64, usize, Stage)>,
    pub skipped: usize,
}

/// Runs `stage` for every seed and fold. Stages with saved metrics are
/// skipped, so an interrupted run resumes where it stopped.
pub fn run(config: &RunConfig, stage: Stage, workers: usize) -> Result<RunSummary> {
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let stages = stage.expand();
    let out = &config.output_dir;
    for &seed in &config.seeds {
        for fold in 0..config.folds {
            let dir = fold_dir(out, seed, fold);
            for s in &stages {
                if let Some(pre) = s.prerequisite() {
                    if !stages.contains(&pre) && !stage_done(&dir, pre) {
                        return Err(CliError::Dependency(format!(
                            "stage {} needs {} outputs (seed {seed}, fold {fold}); run --stage {} first",
                            s.name(),
                            pre.name(),
                            pre.name()
                        )));
                    }
                }
            }
        }
    }

    prepare_output(config)?;
    let dataset = load_corpus(config)?;
    let info = DatasetInfo {
        images: dataset.images.len(),
        num_emotions: dataset.num_emotions,
        num_identities: dataset.num_identities,
    };
    write_json(&out.join(DATASET_INFO_FILE), &info)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;

    let mut summary = RunSummary::default();
    let mut failed = 0;
    for &seed in &config.seeds {
        let dir = seed_dir(out, seed);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let plan = make_group_folds(&dataset.images, config.folds, derive_seed(seed, &[&"folds"]))?;
        let folds_path = dir.join(FOLDS_FILE);
        if !folds_path.is_file() {
            plan.save(&folds_path)?;
        }
        let train = config.train_for(seed);
        let results: Vec<(usize, FoldResult)> = pool.install(|| {
            (0..config.folds)
                .into_par_iter()
                .map(|fold| (fold, run_fold(&dataset, &plan, fold, &stages, &config.model, &train, &fold_dir(out, seed, fold))))
                .collect()
        });
        for (fold, result) in results {
            summary.skipped += result.skipped;
            summary.executed.extend(result.executed.iter().map(|&s| (seed, fold, s)));
            if result.failed {
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(CliError::FoldsFailed { failed, out: out.clone() });
    }
    Ok(summary)
}

#[derive(Default)]
struct FoldResult {
    executed: Vec<Stage>,
    skipped: usize,
    failed: bool,
}

fn run_fold(
    dataset: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    stages: &[Stage],
    model: &ModelConfig,
    train: &TrainConfig,
    dir: &Path,
) -> FoldResult {
    let mut result = FoldResult::default();
    let failure_path = dir.join(FAILURE_FILE);
    let split = match FoldSplit::new(dataset, plan, fold) {
        Ok(split) => split,
        Err(e) => {
            record_failure(&failure_path, "split", &e.into());
            result.failed = true;
            return result;
        }
    };
    for &stage in stages {
        if stage_done(dir, stage) {
            result.skipped += 1;
            continue;
        }
        let started = Instant::now();
        match run_stage(stage, &split, model, train, dir) {
            Ok(metrics) => {
                let shown: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                println!(
                    "seed {} fold {fold} {}: {} ({:.1}s)",
                    train.seed,
                    stage.name(),
                    shown.join(" "),
                    started.elapsed().as_secs_f64()
                );
                result.executed.push(stage);
            }
            Err(e) => {
                record_failure(&failure_path, stage.name(), &e);
                result.failed = true;
                return result;
            }
        }
    }
    if failure_path.is_file() {
        // Best effort: a stale marker only adds a line to the report.
        let _ = fs::remove_file(&failure_path);
    }
    result
}

fn record_failure(path: &Path, stage: &str, error: &CliError) {
    println!("{} {}", path.display(), error.line());
    let failure = StageFailure { stage: stage.into(), code: error.code().into(), message: error.to_string() };
    if let Some(parent) = path.parent() {
        let _ = fs::create_dir_all(parent);
    }
    let _ = write_json(path, &failure);
}

fn run_stage(stage: Stage, split: &FoldSplit, model: &ModelConfig, train: &TrainConfig, fold: &Path) -> Result<Metrics> {
    let dir = fold.join(stage.name());
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut metrics = Metrics::new();
    match stage {
        Stage::Face | Stage::Emotion => {
            let task = if stage == Stage::Face { Task::Identity } else { Task::Emotion };
            let (classifier, acc) = train_baseline(split, task, model, train)?;
            classifier.save(&dir.join("model"))?;
            metrics.insert(stage.name().into(), acc);
        }
        Stage::Emotion2face => {
            let emotion = Classifier::load(&fold.join(Stage::Emotion.name()).join("model"))?;
            let (head, acc) = probe_head(&emotion.base, split, Task::Identity, model, train)?;
            save_head(&dir.join("identity_probe"), model, &head, Task::Identity)?;
            metrics.insert("emotion2face".into(), acc);
        }
        Stage::Hybrid => match train_hybrid(split, model, train) {
            Ok((hybrid, trace)) => {
                hybrid.save(&dir.join("model"))?;
                write_trace(&dir, &trace)?;
                if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                    metrics.insert("refit_identity_val_first".into(), first.identity_refit_val);
                    metrics.insert("refit_identity_val_last".into(), last.identity_refit_val);
                    metrics.insert("emotion_val_last".into(), last.emotion_val);
                }
                metrics.insert("iterations".into(), trace.len() as f64);
            }
            Err(e) => {
                if let veil_core::Error::Divergence { trace, .. } = &e {
                    write_trace(&dir, trace)?;
                }
                return Err(e.into());
            }
        },
        Stage::Probe => {
            let hybrid = HybridModel::load(&fold.join(Stage::Hybrid.name()).join("model"))?;
            let (emotion_head, h2e) = probe_head(&hybrid.base, split, Task::Emotion, model, train)?;
            let (identity_head, h2f) = probe_head(&hybrid.base, split, Task::Identity, model, train)?;
            save_head(&dir.join("emotion_probe"), model, &emotion_head, Task::Emotion)?;
            save_head(&dir.join("identity_probe"), model, &identity_head, Task::Identity)?;
            metrics.insert("hybrid2emotion".into(), h2e);
            metrics.insert("hybrid2face".into(), h2f);
        }
        Stage::All => unreachable!("expanded before scheduling"),
    }
    write_json(&dir.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

fn write_trace(dir: &Path, trace: &LoopTrace) -> Result<()> {
    write_atomic(&dir.join(TRACE_CSV), &trace.to_csv())?;
    write_json(&dir.join(TRACE_JSON), trace)
}

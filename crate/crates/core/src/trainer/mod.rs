//! Single-task baselines, frozen-base probes, and the adversarial loop that
//! scrubs identity from a shared conv base while keeping emotion.

mod config;
mod phases;
mod protocol;
mod report;
mod trace;

pub use config::{EarlyStop, ReinitPolicy, TrainConfig};
pub use phases::{
    adversarial_phase, extract_features, finetune_head_frozen_base, identity_refit_phase, multitask_init,
    run_algorithm1, train_head_on_features, train_single_task, EpochStats, RefitOutcome, DIVERGENCE_LIMIT,
};
pub use protocol::{
    evaluate_fold, evaluate_protocol, holdout_groups, probe_head, train_baseline, train_hybrid, FoldOutcome,
    FoldSplit,
};
pub use report::{Accuracies, Chance, ExperimentReport, FoldFailure, FoldResult, RunReport, METHODS};
pub use trace::{InitRecord, IterationRecord, LoopTrace};

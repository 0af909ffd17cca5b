use std::path::Path;

use veil_core::trainer::{Accuracies, Chance, ExperimentReport, FoldFailure, FoldResult, RunReport};

use crate::config::{RunConfig, ECHO_FILE};
use crate::error::{CliError, Result};
use crate::pipeline::{
    fold_dir, read_json, write_atomic, DatasetInfo, Metrics, Stage, StageFailure, DATASET_INFO_FILE, FAILURE_FILE,
    METRICS_FILE,
};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TABLE: &str = "report.txt";

const COLUMNS: [&str; 5] = ["face", "emotion", "emotion2face", "hybrid2emotion", "hybrid2face"];

/// Collects every fold's stage metrics under `out` into one report.
pub fn collect(out: &Path) -> Result<ExperimentReport> {
    let echo: serde_json::Value = read_json(&out.join(ECHO_FILE))?;
    let config: RunConfig = serde_json::from_value(echo.clone()).map_err(|e| CliError::config(out.join(ECHO_FILE), e))?;
    let info: DatasetInfo = read_json(&out.join(DATASET_INFO_FILE))?;

    let mut runs = Vec::new();
    let mut completed = 0;
    for &seed in &config.seeds {
        let mut folds = Vec::new();
        let mut failures = Vec::new();
        for fold in 0..config.folds {
            let dir = fold_dir(out, seed, fold);
            let failure = dir.join(FAILURE_FILE);
            if failure.is_file() {
                let f: StageFailure = read_json(&failure)?;
                failures.push(FoldFailure { fold, code: f.code, message: format!("{}: {}", f.stage, f.message) });
                continue;
            }
            let mut merged = Metrics::new();
            let mut missing = Vec::new();
            for stage in Stage::PIPELINE {
                let path = dir.join(stage.name()).join(METRICS_FILE);
                if path.is_file() {
                    merged.extend(read_json::<Metrics>(&path)?);
                } else {
                    missing.push(stage.name());
                }
            }
            match COLUMNS.map(|c| merged.get(c).copied()) {
                [Some(a), Some(b), Some(c), Some(d), Some(e)] if missing.is_empty() => {
                    folds.push(FoldResult { fold, accuracies: Accuracies::from_values([a, b, c, d, e]) });
                }
                _ => failures.push(FoldFailure {
                    fold,
                    code: "incomplete".into(),
                    message: format!("missing stages: {}", missing.join(", ")),
                }),
            }
        }
        completed += folds.len();
        runs.push(RunReport::new(seed, folds, failures));
    }
    if completed == 0 {
        return Err(CliError::NoResults(out.to_path_buf()));
    }
    Ok(ExperimentReport::new(echo, Chance::new(info.num_emotions, info.num_identities), runs))
}

/// Writes `report.json`, `report.csv` and `report.txt` and returns the table.
pub fn write(out: &Path, report: &ExperimentReport) -> Result<String> {
    write_atomic(&out.join(REPORT_JSON), &report.to_json())?;
    write_atomic(&out.join(REPORT_CSV), &report.to_csv())?;
    let table = report.to_table();
    write_atomic(&out.join(REPORT_TABLE), &table)?;
    Ok(table)
}

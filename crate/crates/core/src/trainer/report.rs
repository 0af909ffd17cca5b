use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Column names in reporting order.
pub const METHODS: [&str; 5] = ["Face", "Emotion", "Emotion2Face", "Hybrid2Emotion", "Hybrid2Face"];

/// Test accuracies (fractions) of the five models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub face: f64,
    pub emotion: f64,
    pub emotion2face: f64,
    pub hybrid2emotion: f64,
    pub hybrid2face: f64,
}

impl Accuracies {
    pub fn values(&self) -> [f64; 5] {
        [self.face, self.emotion, self.emotion2face, self.hybrid2emotion, self.hybrid2face]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Accuracies { face: v[0], emotion: v[1], emotion2face: v[2], hybrid2emotion: v[3], hybrid2face: v[4] }
    }

    /// Column-wise arithmetic mean; `None` for an empty slice.
    pub fn mean(all: &[Accuracies]) -> Option<Accuracies> {
        if all.is_empty() {
            return None;
        }
        let mut sum = [0.0; 5];
        for a in all {
            sum.iter_mut().zip(a.values()).for_each(|(s, v)| *s += v);
        }
        Some(Accuracies::from_values(sum.map(|s| s / all.len() as f64)))
    }

    /// Column-wise median (mean of the middle pair for even counts).
    pub fn median(all: &[Accuracies]) -> Option<Accuracies> {
        if all.is_empty() {
            return None;
        }
        let mut out = [0.0; 5];
        for (c, slot) in out.iter_mut().enumerate() {
            let mut col: Vec<f64> = all.iter().map(|a| a.values()[c]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.len() / 2;
            *slot = if col.len() % 2 == 1 { col[m] } else { (col[m - 1] + col[m]) / 2.0 };
        }
        Some(Accuracies::from_values(out))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracies: Accuracies,
}

/// A fold that aborted, with the error code and message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub code: String,
    pub message: String,
}

impl FoldFailure {
    pub fn new(fold: usize, error: &Error) -> Self {
        FoldFailure { fold, code: error.code().to_string(), message: error.to_string() }
    }
}

/// All folds of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
    /// Mean over completed folds.
    pub mean: Option<Accuracies>,
}

impl RunReport {
    pub fn new(seed: u64, mut folds: Vec<FoldResult>, mut failures: Vec<FoldFailure>) -> Self {
        folds.sort_by_key(|f| f.fold);
        failures.sort_by_key(|f| f.fold);
        let all: Vec<Accuracies> = folds.iter().map(|f| f.accuracies).collect();
        RunReport { seed, mean: Accuracies::mean(&all), folds, failures }
    }
}

/// Uniform-guess accuracy for each label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chance {
    pub emotion: f64,
    pub identity: f64,
}

impl Chance {
    pub fn new(num_emotions: usize, num_identities: usize) -> Self {
        Chance { emotion: 1.0 / num_emotions as f64, identity: 1.0 / num_identities as f64 }
    }

    /// Chance level under each column.
    pub fn per_method(&self) -> [f64; 5] {
        [self.identity, self.emotion, self.identity, self.emotion, self.identity]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: serde_json::Value,
    pub chance: Chance,
    pub runs: Vec<RunReport>,
    /// Column-wise median of the per-seed means.
    pub median: Option<Accuracies>,
}

impl ExperimentReport {
    pub fn new(config: serde_json::Value, chance: Chance, mut runs: Vec<RunReport>) -> Self {
        runs.sort_by_key(|r| r.seed);
        let means: Vec<Accuracies> = runs.iter().filter_map(|r| r.mean).collect();
        ExperimentReport { config, chance, median: Accuracies::median(&means), runs }
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is plain data");
        s.push('\n');
        s
    }

    /// One row per fold and per seed mean, plus the median row; accuracies as
    /// fractions.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,fold,face,emotion,emotion2face,hybrid2emotion,hybrid2face\n");
        let row = |out: &mut String, seed: &str, fold: &str, a: &Accuracies| {
            let v = a.values().map(|x| x.to_string()).join(",");
            writeln!(out, "{seed},{fold},{v}").expect("writing to a String");
        };
        for run in &self.runs {
            for f in &run.folds {
                row(&mut out, &run.seed.to_string(), &f.fold.to_string(), &f.accuracies);
            }
            if let Some(m) = &run.mean {
                row(&mut out, &run.seed.to_string(), "mean", m);
            }
        }
        if let Some(m) = &self.median {
            row(&mut out, "median", "mean", m);
        }
        out
    }

    /// Aligned percentages, one row per seed mean, then the median across
    /// seeds and the chance level of each column.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, [String; 5])> = Vec::new();
        let pct = |v: [f64; 5]| v.map(|x| format!("{:.2}", 100.0 * x));
        for run in &self.runs {
            if let Some(m) = &run.mean {
                let label = format!("seed {} ({} folds)", run.seed, run.folds.len());
                rows.push((label, pct(m.values())));
            }
        }
        if let Some(m) = &self.median {
            rows.push(("median".into(), pct(m.values())));
        }
        rows.push(("chance".into(), pct(self.chance.per_method())));

        let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let widths: Vec<usize> = METHODS
            .iter()
            .enumerate()
            .map(|(c, m)| rows.iter().map(|r| r.1[c].len()).max().unwrap_or(0).max(m.len()))
            .collect();
        let mut out = format!("{:label_w$}", "");
        for (m, w) in METHODS.iter().zip(&widths) {
            write!(out, "  {m:>w$}").expect("writing to a String");
        }
        out.push('\n');
        for (label, cells) in &rows {
            write!(out, "{label:label_w$}").expect("writing to a String");
            for (cell, w) in cells.iter().zip(&widths) {
                write!(out, "  {cell:>w$}").expect("writing to a String");
            }
            out.push('\n');
        }
        for run in &self.runs {
            for f in &run.failures {
                writeln!(out, "seed {} fold {} failed [{}]: {}", run.seed, f.fold, f.code, f.message)
                    .expect("writing to a String");
            }
        }
        out
    }
}

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// State of the loop right after multi-task initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitRecord {
    pub loss_emotion: f64,
    pub identity_train: f64,
    pub loss_identity: f64,
    pub emotion_val: f64,
    pub identity_val: f64,
}

/// One outer iteration: adversarial phase followed by an identity refit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Mean per-sample losses over the last adversarial epoch.
    pub loss_emotion: f64,
    pub loss_identity: f64,
    pub emotion_train: f64,
    pub emotion_val: f64,
    pub identity_refit_train: f64,
    pub identity_refit_val: f64,
    /// Accuracy of the frozen identity head on the fit data just before and
    /// just after the adversarial phase.
    pub identity_before_adv: f64,
    pub identity_after_adv: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub init: Option<InitRecord>,
    pub records: Vec<IterationRecord>,
    pub stopped_early: bool,
}

impl LoopTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&IterationRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// CSV with columns `t,L_e,L_i,acc_e_val,acc_i_refit_val`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,L_e,L_i,acc_e_val,acc_i_refit_val\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.t, r.loss_emotion, r.loss_identity, r.emotion_val, r.identity_refit_val
            )
            .expect("writing to a String");
        }
        out
    }
}

use serde::{Deserialize, Serialize};

use super::Method;
use crate::annotate::TokenLedger;
use crate::env::EnvFamily;
use crate::lfm::F1Score;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 0 is the behavioural-cloning policy.
    pub round: u32,
    pub train_completion: Option<f64>,
    pub test_completion: f64,
    /// Examples collected in this round.
    pub new_examples: usize,
    /// Size of the deduplicated training union.
    pub dataset_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub budget: u64,
    pub used: u64,
    pub calls: u64,
    pub cached: u64,
}

impl From<&TokenLedger> for LedgerReport {
    fn from(l: &TokenLedger) -> Self {
        LedgerReport {
            budget: l.budget,
            used: l.used,
            calls: l.calls,
            cached: l.cached,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub annotator: String,
    pub windows: usize,
    pub examples: usize,
    pub yes: usize,
    pub no: usize,
    pub budget_exhausted: bool,
    pub unparsed_windows: usize,
    pub dropped_refs: usize,
    pub train_examples: usize,
    pub val_examples: usize,
    /// F1 on the balanced validation split.
    pub val_f1: F1Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActPredReport {
    pub queries: usize,
    pub unparsed: usize,
    /// Predictions matched only approximately to a candidate.
    pub inexact: usize,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaggerReport {
    pub windows: usize,
    pub labelled_steps: usize,
    pub dropped_refs: usize,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub pre_test_completion: f64,
    pub post_test_completion: f64,
    pub new_examples: usize,
    pub rollout_steps: usize,
    /// Annotator tokens spent during adaptation.
    pub tokens_used: u64,
}

/// Everything a run measured. Contains no timing information, so reruns
/// of a configuration produce identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub family: EnvFamily,
    pub seed: u64,
    pub train_instances: usize,
    pub test_instances: usize,
    pub demos: usize,
    pub rounds: Vec<RoundReport>,
    pub ledger: LedgerReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actpred: Option<ActPredReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dagger: Option<DaggerReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptReport>,
}

impl RunReport {
    pub fn method_label(&self) -> String {
        self.method.name().to_string()
    }

    /// Test completion of the final policy (post-adaptation when adapted).
    pub fn final_test_completion(&self) -> f64 {
        match &self.adaptation {
            Some(a) => a.post_test_completion,
            None => self.rounds.last().map(|r| r.test_completion).unwrap_or(0.0),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

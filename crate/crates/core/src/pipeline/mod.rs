//! Imitation pipelines: behavioural cloning, feedback-model improvement
//! and adaptation, and the action-prediction and batched-relabelling
//! baselines, all under a shared annotator token budget.

mod config;
mod persist;
mod report;
mod run;

pub use config::{
    interpolate, AdaptConfig, BudgetConfig, CollectConfig, EnvConfig, EvalConfig, Method, RunConfig,
};
pub use persist::{read_jsonl, write_jsonl, RunDir};
pub use report::{
    ActPredReport, AdaptReport, DaggerReport, FeedbackReport, LedgerReport, RoundReport, RunReport,
};
pub use run::{
    adapt, collect_desirable, collect_rollouts, collect_with, demonstrations, execute,
    expert_trajectories, improve_round, run_actpred, run_bc, run_dagger, run_lfm, train_bc,
    Artifacts, CollectStats, DemoRecord, Pools,
};

use crate::annotate::AnnotateError;
use crate::env::EnvError;
use crate::evalkit::EvalError;
use crate::lfm::LfmError;
use crate::policy::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("token budget exhausted before any annotation: {0}")]
    BudgetExhausted(String),
    #[error("endpoint failure: {0}")]
    Endpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Lfm(LfmError),
    #[error(transparent)]
    Annotate(AnnotateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

impl From<AnnotateError> for PipelineError {
    fn from(e: AnnotateError) -> Self {
        match e {
            AnnotateError::Endpoint(m) => PipelineError::Endpoint(m),
            AnnotateError::Budget(b) => PipelineError::BudgetExhausted(b.to_string()),
            other => PipelineError::Annotate(other),
        }
    }
}

impl From<LfmError> for PipelineError {
    fn from(e: LfmError) -> Self {
        match e {
            LfmError::Annotate(a) => a.into(),
            other => PipelineError::Lfm(other),
        }
    }
}

//! Language-conditioned policy: featurization, token-level scoring,
//! cross-entropy training and rollouts.

pub mod features;
pub mod model;
pub mod rollout;
pub mod train;

pub use features::{featurize, ContextWindow, HistoryStep, HISTORY_CAP};
pub use model::{action_nll, select_action, PolicyHyper, PolicyModel};
pub use rollout::{
    rollout, rollout_steps, Decision, ExpertPolicy, ModelPolicy, Policy, RandomPolicy,
    RepeatPolicy, StepRecord, Trajectory,
};
pub use train::{dedup_union, train_policy, ImitationExample, TrainError};

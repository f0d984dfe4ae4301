//! Feedback and action-prediction annotators: prompt rendering, response
//! parsing, privileged oracles, a remote chat client and the output-token
//! ledger.

mod annotator;
mod ledger;
mod oracle;
mod parse;
mod prompt;
pub mod remote;
mod templates;

use serde::{Deserialize, Serialize};

use crate::env::{EnvError, EnvState, Instruction};
use crate::policy::Trajectory;

pub use annotator::{Annotator, AnnotatorSpec};
pub use ledger::{BudgetExhausted, TokenLedger};
pub use oracle::{
    expert_action, noisy_annotate, noisy_predict_action, oracle_annotate, oracle_label_steps,
    oracle_retro_actions, oracle_summary,
};
pub use parse::{
    normalize_action, parse_action_prediction, parse_retro_actions, parse_step_feedback,
    ActionMatch, ParsedFeedback,
};
pub use prompt::{
    build_actpred_prompt, build_dagger_prompt, build_detailed_prompt, build_lfm_prompt,
    render_detailed_response, render_feedback_text, render_retro_actions, DETAILED_SUFFIX,
    LFM_HEADER, LFM_QUESTION,
};
pub use templates::{
    abstract_explanation, default_template, family_purpose, fill, third_person, verb_class,
    TemplateKey,
};

/// Maximum number of steps in one window.
pub const WINDOW_CAP: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("unparseable response: {0}")]
    Parse(String),
    #[error("privileged state missing: expected {expected} states, got {got}")]
    MissingState { expected: usize, got: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Budget(#[from] BudgetExhausted),
    #[error("endpoint failure: {0}")]
    Endpoint(String),
    #[error("response cache {path}: {reason}")]
    Cache { path: String, reason: String },
    #[error("rate {name} = {value} is outside [0, 1]")]
    Rate { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStep {
    /// 1-based step number within the trajectory.
    pub number: u32,
    pub action: String,
    pub result: String,
}

/// A contiguous slice of a trajectory shown to the annotator in one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub instance_id: String,
    pub rollout_id: String,
    pub instruction: String,
    /// 0-based index of the first step.
    pub start: u32,
    /// Observation in front of the first step.
    pub before: String,
    pub steps: Vec<WindowStep>,
}

impl Window {
    /// Window of `len` steps starting at 0-based index `start`.
    pub fn from_trajectory(traj: &Trajectory, start: usize, len: usize) -> Window {
        let end = (start + len.clamp(1, WINDOW_CAP)).min(traj.len());
        Window {
            instance_id: traj.instance_id.clone(),
            rollout_id: traj.rollout_id.clone(),
            instruction: traj.instruction.text.clone(),
            start: start as u32,
            before: traj.steps[start].observation.clone(),
            steps: (start..end)
                .map(|t| WindowStep {
                    number: t as u32 + 1,
                    action: traj.steps[t].action.clone(),
                    result: traj.steps[t].result.clone(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first_number(&self) -> u32 {
        self.start + 1
    }

    pub fn last_number(&self) -> u32 {
        self.start + self.steps.len() as u32
    }

    pub fn contains(&self, number: u32) -> bool {
        (self.first_number()..=self.last_number()).contains(&number)
    }
}

/// Hidden information recorded during the rollout that produced a window:
/// the state in front of every step plus the state after the last one, and
/// the candidate actions at every step.
#[derive(Debug, Clone)]
pub struct Privileged {
    pub instruction: Instruction,
    pub states: Vec<EnvState>,
    pub candidates: Vec<Vec<String>>,
}

impl Privileged {
    pub fn from_trajectory(traj: &Trajectory, window: &Window) -> Privileged {
        let start = window.start as usize;
        let end = start + window.len();
        let mut states: Vec<EnvState> = traj.steps[start..end]
            .iter()
            .map(|s| s.state.clone())
            .collect();
        states.push(traj.state_after(end - 1).clone());
        Privileged {
            instruction: traj.instruction.clone(),
            states,
            candidates: traj.steps[start..end]
                .iter()
                .map(|s| s.candidates.clone())
                .collect(),
        }
    }

    fn check(&self, window: &Window) -> Result<(), AnnotateError> {
        if self.states.len() != window.len() + 1 {
            return Err(AnnotateError::MissingState {
                expected: window.len() + 1,
                got: self.states.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Yes,
    No,
}

impl Label {
    pub fn from_bool(yes: bool) -> Label {
        if yes {
            Label::Yes
        } else {
            Label::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Label::Yes
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Yes => "yes",
            Label::No => "no",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFeedback {
    pub step: u32,
    pub label: Label,
    pub explanation: Option<String>,
}

impl StepFeedback {
    pub fn new(step: u32, label: Label) -> Self {
        StepFeedback {
            step,
            label,
            explanation: None,
        }
    }
}

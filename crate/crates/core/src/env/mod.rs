//! Deterministic grounded environments.
//!
//! Two families are provided: a household object-manipulation world
//! (`house-v0`, plus the large-action-space `house-xl`) and an egocentric
//! street-navigation graph (`street-v0`). Both are episodic and partially
//! observed, expose a privileged remaining-cost oracle, and an expert that
//! follows a minimum-length plan.

pub mod gen;
pub mod house;
pub mod street;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gen::{combo_key, gen_instances, gen_instances_with, GenConfig};

/// Version of the instance/trajectory JSONL schema.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown environment family `{0}`")]
    UnknownFamily(String),
    #[error("invalid action `{action}`: not plausible in the current state")]
    InvalidAction { action: String },
    #[error("episode already finished")]
    EpisodeOver,
    #[error("goal unreachable from the current state")]
    Unreachable,
    #[error("unsatisfiable instance parameters: {0}")]
    Unsatisfiable(String),
    #[error("state and instance belong to different families")]
    FamilyMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvFamily {
    #[serde(rename = "house-v0")]
    House,
    #[serde(rename = "house-xl")]
    HouseXl,
    #[serde(rename = "street-v0")]
    Street,
}

impl EnvFamily {
    pub fn name(self) -> &'static str {
        match self {
            EnvFamily::House => "house-v0",
            EnvFamily::HouseXl => "house-xl",
            EnvFamily::Street => "street-v0",
        }
    }

    pub fn default_max_steps(self) -> u32 {
        match self {
            EnvFamily::House | EnvFamily::HouseXl => 50,
            EnvFamily::Street => 40,
        }
    }
}

impl fmt::Display for EnvFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvFamily {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "house-v0" | "house" => Ok(EnvFamily::House),
            "house-xl" => Ok(EnvFamily::HouseXl),
            "street-v0" | "street" => Ok(EnvFamily::Street),
            other => Err(EnvError::UnknownFamily(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Task family of an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskFamily {
    #[serde(rename = "put")]
    Put,
    #[serde(rename = "put-clean")]
    PutClean,
    #[serde(rename = "heat-put")]
    HeatPut,
    #[serde(rename = "cool-put")]
    CoolPut,
    #[serde(rename = "put-two")]
    PutTwo,
    #[serde(rename = "navigate")]
    Navigate,
}

impl TaskFamily {
    pub fn tag(self) -> &'static str {
        match self {
            TaskFamily::Put => "put",
            TaskFamily::PutClean => "put-clean",
            TaskFamily::HeatPut => "heat-put",
            TaskFamily::CoolPut => "cool-put",
            TaskFamily::PutTwo => "put-two",
            TaskFamily::Navigate => "navigate",
        }
    }

    pub const HOUSE: [TaskFamily; 5] = [
        TaskFamily::Put,
        TaskFamily::PutClean,
        TaskFamily::HeatPut,
        TaskFamily::CoolPut,
        TaskFamily::PutTwo,
    ];
}

/// Goal parameters of an instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Goal {
    House(house::HouseGoal),
    Street(street::StreetGoal),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub family: TaskFamily,
    pub goal: Goal,
}

/// A canonical action string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub String);

impl Action {
    pub fn new(s: impl Into<String>) -> Self {
        Action(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Action {
    fn from(s: &str) -> Self {
        Action(s.to_string())
    }
}

/// Structured view of what the agent can perceive after a transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Text describing the outcome of the last action.
    pub result: String,
    pub scene: Scene,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scene {
    House(house::HouseScene),
    Street(street::StreetScene),
}

/// Full instance description: everything needed to reset an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub schema_version: u32,
    pub id: String,
    pub family: EnvFamily,
    pub split: Split,
    pub max_steps: u32,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layout {
    House(house::HouseLayout),
    Street(street::StreetLayout),
}

/// Hidden environment state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvState {
    House(house::HouseState),
    Street(street::StreetState),
}

impl EnvState {
    pub fn steps(&self) -> u32 {
        match self {
            EnvState::House(s) => s.steps,
            EnvState::Street(s) => s.steps,
        }
    }

    pub fn max_steps(&self) -> u32 {
        match self {
            EnvState::House(s) => s.max_steps,
            EnvState::Street(s) => s.max_steps,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        match self {
            EnvState::House(s) => s.rng_seed,
            EnvState::Street(s) => s.rng_seed,
        }
    }

    /// Whether the goal predicate holds.
    pub fn goal_satisfied(&self) -> bool {
        match self {
            EnvState::House(s) => s.goal_satisfied(),
            EnvState::Street(s) => s.goal_satisfied(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.goal_satisfied() || self.steps() >= self.max_steps()
    }

    /// Planning key: the state with the step counter erased.
    pub fn planning_key(&self) -> String {
        match self {
            EnvState::House(s) => s.planning_key(),
            EnvState::Street(s) => s.planning_key(),
        }
    }
}

/// Result of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observation: Observation,
    pub done: bool,
    pub success: bool,
}

/// Start an episode.
pub fn reset(
    desc: &InstanceDescriptor,
    seed: u64,
) -> Result<(EnvState, Instruction, Observation), EnvError> {
    match &desc.layout {
        Layout::House(layout) => {
            let (st, ins, obs) = house::reset(layout, desc.max_steps, seed)?;
            Ok((EnvState::House(st), ins, obs))
        }
        Layout::Street(layout) => {
            let (st, ins, obs) = street::reset(layout, desc.max_steps, seed)?;
            Ok((EnvState::Street(st), ins, obs))
        }
    }
}

/// Apply `action`. Implausible actions are rejected with
/// [`EnvError::InvalidAction`].
pub fn step(state: &EnvState, action: &Action) -> Result<StepOutcome, EnvError> {
    if state.is_done() {
        return Err(EnvError::EpisodeOver);
    }
    let (next, obs) = match state {
        EnvState::House(s) => {
            let (n, o) = house::step(s, action)?;
            (EnvState::House(n), o)
        }
        EnvState::Street(s) => {
            let (n, o) = street::step(s, action)?;
            (EnvState::Street(n), o)
        }
    };
    Ok(StepOutcome {
        done: obs.done,
        success: obs.success,
        state: next,
        observation: obs,
    })
}

/// Lexicographically ordered, duplicate-free plausible actions.
pub fn plausible_actions(state: &EnvState) -> Vec<Action> {
    match state {
        EnvState::House(s) => house::plausible_actions(s),
        EnvState::Street(s) => street::plausible_actions(s),
    }
}

/// Length of a minimum plan from `state` to success.
pub fn remaining_cost(state: &EnvState, _instruction: &Instruction) -> Result<u32, EnvError> {
    let cost = match state {
        EnvState::House(s) => house::remaining_cost(s),
        EnvState::Street(s) => street::remaining_cost(s),
    };
    cost.ok_or(EnvError::Unreachable)
}

/// First action (in plausible order) that lies on a minimum-length plan.
pub fn expert_next_action(state: &EnvState, instruction: &Instruction) -> Result<Action, EnvError> {
    let here = remaining_cost(state, instruction)?;
    if here == 0 {
        // Goal already holds; any action keeps it satisfied. Never reached
        // during an episode since success terminates it.
        return Err(EnvError::EpisodeOver);
    }
    if let EnvState::Street(s) = state {
        return street::expert_next_action(s).ok_or(EnvError::Unreachable);
    }
    for action in plausible_actions(state) {
        let next = match state {
            EnvState::House(s) => EnvState::House(house::step(s, &action)?.0),
            EnvState::Street(_) => unreachable!(),
        };
        if let Ok(c) = remaining_cost(&next, instruction) {
            if c + 1 == here {
                return Ok(action);
            }
        }
    }
    Err(EnvError::Unreachable)
}

/// States before each action, the observation there and the action taken.
pub type ExpertSteps = Vec<(EnvState, Observation, Action)>;

/// Run the expert from reset until the episode ends, returning the visited
/// states (before each action), the actions and the final outcome.
pub fn expert_episode(
    desc: &InstanceDescriptor,
    seed: u64,
) -> Result<(Instruction, ExpertSteps, StepOutcome), EnvError> {
    let (mut state, instruction, mut obs) = reset(desc, seed)?;
    let mut steps = Vec::new();
    loop {
        let action = expert_next_action(&state, &instruction)?;
        let out = step(&state, &action)?;
        steps.push((state, obs, action));
        if out.done {
            return Ok((instruction, steps, out));
        }
        state = out.state.clone();
        obs = out.observation.clone();
    }
}

pub(crate) fn join_list(items: &[String]) -> String {
    match items.len() {
        0 => "nothing".to_string(),
        1 => items[0].clone(),
        _ => {
            let (last, head) = items.split_last().unwrap();
            format!("{}, and {}", head.join(", "), last)
        }
    }
}

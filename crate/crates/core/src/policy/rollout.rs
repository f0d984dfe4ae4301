//! Policies and episode rollouts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::features::{ContextWindow, HistoryStep, HISTORY_CAP};
use super::model::{argmin_first, PolicyModel};
use super::train::ImitationExample;
use crate::env::{self, EnvError, EnvState, InstanceDescriptor, Instruction};
use crate::seeding;
use crate::verbalize::verbalize;

/// Everything a policy may look at when choosing an action. Learned
/// policies only use the context and candidates; privileged ones may read
/// the hidden state.
pub struct Decision<'a> {
    pub ctx: &'a ContextWindow,
    pub candidates: &'a [String],
    pub state: &'a EnvState,
    pub instruction: &'a Instruction,
}

pub trait Policy: Sync {
    /// Index into `d.candidates`.
    fn choose(&self, d: &Decision<'_>, rng: &mut ChaCha8Rng) -> usize;
}

/// Greedy (minimum NLL) or temperature-sampled model policy.
pub struct ModelPolicy<'a> {
    pub model: &'a PolicyModel,
    pub temperature: Option<f64>,
}

impl Policy for ModelPolicy<'_> {
    fn choose(&self, d: &Decision<'_>, rng: &mut ChaCha8Rng) -> usize {
        let scores = self.model.score_candidates(d.ctx, d.candidates);
        match self.temperature {
            None => argmin_first(&scores).unwrap_or(0),
            Some(t) => {
                let m = scores.iter().cloned().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = scores.iter().map(|s| (-(s - m) / t).exp()).collect();
                let total: f64 = w.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                for (i, wi) in w.iter().enumerate() {
                    if u < *wi {
                        return i;
                    }
                    u -= wi;
                }
                w.len() - 1
            }
        }
    }
}

/// Follows the minimum-length plan.
pub struct ExpertPolicy;

impl Policy for ExpertPolicy {
    fn choose(&self, d: &Decision<'_>, _rng: &mut ChaCha8Rng) -> usize {
        env::expert_next_action(d.state, d.instruction)
            .ok()
            .and_then(|a| d.candidates.iter().position(|c| c == a.as_str()))
            .unwrap_or(0)
    }
}

/// Uniformly random plausible action.
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn choose(&self, d: &Decision<'_>, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..d.candidates.len())
    }
}

/// Always the given action when plausible, else the first candidate.
pub struct RepeatPolicy(pub String);

impl Policy for RepeatPolicy {
    fn choose(&self, d: &Decision<'_>, _rng: &mut ChaCha8Rng) -> usize {
        d.candidates.iter().position(|c| c == &self.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Hidden state before the action.
    pub state: EnvState,
    pub observation: String,
    pub action: String,
    /// Verbalized observation after the action.
    pub result: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub instance_id: String,
    pub rollout_id: String,
    pub seed: u64,
    pub instruction: Instruction,
    pub steps: Vec<StepRecord>,
    pub final_state: EnvState,
    pub success: bool,
}

impl Trajectory {
    /// Context window in front of step `t` (0-based).
    pub fn context_at(&self, t: usize) -> ContextWindow {
        let lo = t.saturating_sub(HISTORY_CAP);
        ContextWindow {
            instruction: self.instruction.text.clone(),
            history: self.steps[lo..t]
                .iter()
                .map(|s| HistoryStep {
                    observation: s.observation.clone(),
                    action: s.action.clone(),
                })
                .collect(),
            observation: self.steps[t].observation.clone(),
        }
    }

    /// Hidden state after step `t`.
    pub fn state_after(&self, t: usize) -> &EnvState {
        self.steps
            .get(t + 1)
            .map(|s| &s.state)
            .unwrap_or(&self.final_state)
    }

    pub fn imitation_example(&self, t: usize, round: u32) -> ImitationExample {
        self.imitation_example_with(t, round, self.steps[t].action.clone())
    }

    /// Example at step `t` with a different target action.
    pub fn imitation_example_with(&self, t: usize, round: u32, action: String) -> ImitationExample {
        ImitationExample {
            instance_id: self.instance_id.clone(),
            rollout_id: self.rollout_id.clone(),
            round,
            step: t as u32,
            context: self.context_at(t),
            action,
            candidates: self.steps[t].candidates.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Run `policy` on `desc` until the episode ends or `max_steps` actions
/// have been taken (whichever is first).
pub fn rollout_steps(
    policy: &dyn Policy,
    desc: &InstanceDescriptor,
    seed: u64,
    rollout_id: &str,
    max_steps: Option<u32>,
) -> Result<Trajectory, EnvError> {
    let (mut state, instruction, obs) = env::reset(desc, seed)?;
    let mut rng = seeding::rng(
        seed,
        "rollout-policy",
        seeding::stable_hash(&[rollout_id.as_bytes()]),
    );
    let mut ctx = ContextWindow::new(instruction.text.clone(), verbalize(&obs, 0).text);
    let mut steps = Vec::new();
    let mut success = false;
    let limit = max_steps.unwrap_or(u32::MAX);
    while !state.is_done() && (steps.len() as u32) < limit {
        let candidates: Vec<String> = env::plausible_actions(&state)
            .into_iter()
            .map(|a| a.0)
            .collect();
        let i = policy.choose(
            &Decision {
                ctx: &ctx,
                candidates: &candidates,
                state: &state,
                instruction: &instruction,
            },
            &mut rng,
        );
        let action = candidates[i].clone();
        let out = env::step(&state, &env::Action(action.clone()))?;
        let result = verbalize(&out.observation, steps.len() + 1).text;
        ctx.advance(&action, result.clone());
        steps.push(StepRecord {
            state,
            observation: ctx.history.last().unwrap().observation.clone(),
            action,
            result,
            candidates,
        });
        success = out.success;
        state = out.state;
    }
    Ok(Trajectory {
        instance_id: desc.id.clone(),
        rollout_id: rollout_id.to_string(),
        seed,
        instruction,
        steps,
        final_state: state,
        success,
    })
}

/// Run `policy` on `desc` until the episode ends.
pub fn rollout(
    policy: &dyn Policy,
    desc: &InstanceDescriptor,
    seed: u64,
    rollout_id: &str,
) -> Result<Trajectory, EnvError> {
    rollout_steps(policy, desc, seed, rollout_id, None)
}

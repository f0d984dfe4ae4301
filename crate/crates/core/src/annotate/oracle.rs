//! Privileged annotators that read the hidden environment state.

use rand::Rng;
use sha2::{Digest, Sha256};

use super::templates::{default_template, fill, verb_class, TemplateKey};
use super::{AnnotateError, Label, Privileged, StepFeedback, Window};
use crate::env::{self, Action, EnvState, Instruction};
use crate::seeding;

/// Step t is productive iff the remaining cost strictly drops across it.
pub fn oracle_label_steps(
    window: &Window,
    privileged: &Privileged,
) -> Result<Vec<Label>, AnnotateError> {
    privileged.check(window)?;
    let costs = privileged
        .states
        .iter()
        .map(|s| env::remaining_cost(s, &privileged.instruction))
        .collect::<Result<Vec<u32>, _>>()?;
    Ok(costs
        .windows(2)
        .map(|c| Label::from_bool(c[1] < c[0]))
        .collect())
}

fn with_explanations(
    window: &Window,
    privileged: &Privileged,
    labels: Vec<Label>,
    detailed: bool,
) -> Vec<StepFeedback> {
    window
        .steps
        .iter()
        .zip(labels)
        .map(|(s, label)| StepFeedback {
            step: s.number,
            label,
            explanation: (detailed && label == Label::Yes).then(|| {
                let key = TemplateKey::of(label, &s.action, privileged.instruction.family);
                fill(&default_template(key), &s.action)
            }),
        })
        .collect()
}

/// Ground-truth feedback; explanations are attached to helpful steps when
/// `detailed` is set.
pub fn oracle_annotate(
    window: &Window,
    privileged: &Privileged,
    detailed: bool,
) -> Result<Vec<StepFeedback>, AnnotateError> {
    let labels = oracle_label_steps(window, privileged)?;
    Ok(with_explanations(window, privileged, labels, detailed))
}

fn check_rate(name: &'static str, value: f64) -> Result<(), AnnotateError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AnnotateError::Rate { name, value })
    }
}

/// Oracle labels with independent seeded flips: no→yes with probability
/// `fp_rate`, yes→no with probability `fn_rate`. Each flip depends only on
/// (seed, instance, rollout, step), never on which window carried the step.
pub fn noisy_annotate(
    window: &Window,
    privileged: &Privileged,
    fp_rate: f64,
    fn_rate: f64,
    seed: u64,
    detailed: bool,
) -> Result<Vec<StepFeedback>, AnnotateError> {
    check_rate("fp_rate", fp_rate)?;
    check_rate("fn_rate", fn_rate)?;
    let labels = oracle_label_steps(window, privileged)?
        .into_iter()
        .zip(&window.steps)
        .map(|(label, s)| {
            let key = format!("{}|{}|{}", window.instance_id, window.rollout_id, s.number);
            let u = seeding::unit(seed, "noisy-feedback", &key);
            match label {
                Label::No if u < fp_rate => Label::Yes,
                Label::Yes if u < fn_rate => Label::No,
                l => l,
            }
        })
        .collect();
    Ok(with_explanations(window, privileged, labels, detailed))
}

pub fn expert_action(state: &EnvState, instruction: &Instruction) -> Result<Action, AnnotateError> {
    Ok(env::expert_next_action(state, instruction)?)
}

/// Expert action, replaced with probability `wrong_rate` by a different
/// candidate drawn uniformly. The choice is a pure function of the prompt
/// digest and the seed.
pub fn noisy_predict_action(
    prompt: &str,
    candidates: &[String],
    expert: &str,
    wrong_rate: f64,
    seed: u64,
) -> Result<String, AnnotateError> {
    check_rate("wrong_action_rate", wrong_rate)?;
    let digest = hex::encode(Sha256::digest(prompt.as_bytes()));
    let others: Vec<&String> = candidates.iter().filter(|c| *c != expert).collect();
    if others.is_empty() || seeding::unit(seed, "noisy-action", &digest) >= wrong_rate {
        return Ok(expert.to_string());
    }
    let mut rng = seeding::rng(
        seed,
        "noisy-action-pick",
        seeding::stable_hash(&[digest.as_bytes()]),
    );
    Ok(others[rng.gen_range(0..others.len())].clone())
}

/// Expert action at every state of the window.
pub fn oracle_retro_actions(
    window: &Window,
    privileged: &Privileged,
) -> Result<Vec<(u32, String)>, AnnotateError> {
    privileged.check(window)?;
    window
        .steps
        .iter()
        .zip(&privileged.states)
        .map(|(s, st)| Ok((s.number, expert_action(st, &privileged.instruction)?.0)))
        .collect()
}

/// Summary and improvement lines of a detailed oracle response.
pub fn oracle_summary(window: &Window, feedback: &[StepFeedback]) -> (String, Vec<String>) {
    let yes = feedback.iter().filter(|f| f.label == Label::Yes).count();
    let summary = format!(
        "The player made progress on {yes} of {} steps while trying to {}",
        feedback.len(),
        window.instruction.trim_end_matches('.')
    );
    let mut classes: Vec<&str> = window
        .steps
        .iter()
        .zip(feedback)
        .filter(|(_, f)| f.label == Label::No)
        .map(|(s, _)| verb_class(&s.action))
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let improvement = if classes.is_empty() {
        vec!["Continuing with the current plan".to_string()]
    } else {
        classes
            .into_iter()
            .map(|c| format!("Avoiding {c} actions that do not make progress"))
            .collect()
    };
    (summary, improvement)
}

use super::{Label, StepFeedback, Window};
use crate::policy::HistoryStep;

pub const LFM_HEADER: &str = "You will be shown a playthrough for solving a task.";
pub const LFM_QUESTION: &str = "Is the player on the right track to solve the task?";
const LFM_ANSWER: &str =
    "Answer yes or no. If yes, list the helpful steps by the step number in bullet form.";
pub const DETAILED_SUFFIX: &str = "Next under heading #Summary, summarize in one sentence what the player doing at a high level. Finally under heading #Improvement, describe how the player can improve their strategy to solve the task.";
const DAGGER_ANSWER: &str = "For every step, list the action an expert player would take in that situation as a bullet \"- Step N: <action>\".";

fn playthrough(window: &Window) -> String {
    let mut out = String::new();
    out.push_str(LFM_HEADER);
    out.push('\n');
    out.push_str(&format!("Task: {}\n", window.instruction));
    out.push_str(&format!("Before: {}\n", window.before));
    for s in &window.steps {
        out.push_str(&format!(
            "Step {}. Your action: {}. Result: {}\n",
            s.number, s.action, s.result
        ));
    }
    out.push_str(LFM_QUESTION);
    out.push('\n');
    out
}

pub fn build_lfm_prompt(window: &Window) -> String {
    format!("{}{LFM_ANSWER}\n", playthrough(window))
}

pub fn build_detailed_prompt(window: &Window) -> String {
    format!("{}{DETAILED_SUFFIX}\n", build_lfm_prompt(window))
}

/// Batched retroactive action-labelling prompt.
pub fn build_dagger_prompt(window: &Window) -> String {
    format!("{}{DAGGER_ANSWER}\n", playthrough(window))
}

pub fn build_actpred_prompt(
    instruction: &str,
    history: &[HistoryStep],
    observation: &str,
    candidates: &[String],
) -> String {
    let mut out = format!("Your task is: {instruction}\n");
    for h in history {
        out.push_str(&format!("You see: {}\n", h.observation));
        out.push_str(&format!("You decide to: {}.\n", h.action));
    }
    out.push_str(&format!("You see: {observation}\n"));
    out.push_str(&format!(
        "what do you decide to do? available actions: {}\n",
        candidates.join(", ")
    ));
    out.push_str("You decide to:");
    out
}

/// Render labels in the annotator output grammar: "No", or "Yes" followed
/// by one bullet per helpful step.
pub fn render_feedback_text(labels: &[StepFeedback]) -> String {
    let yes: Vec<&StepFeedback> = labels.iter().filter(|l| l.label == Label::Yes).collect();
    if yes.is_empty() {
        return "No".to_string();
    }
    let mut out = String::from("Yes");
    for l in yes {
        match &l.explanation {
            Some(e) => out.push_str(&format!("\n- Step {}: {}", l.step, e)),
            None => out.push_str(&format!("\n- Step {}", l.step)),
        }
    }
    out
}

/// Feedback text followed by the summary and improvement sections.
pub fn render_detailed_response(
    labels: &[StepFeedback],
    summary: &str,
    improvement: &[String],
) -> String {
    let mut out = render_feedback_text(labels);
    out.push_str("\n#Summary\n");
    out.push_str(summary);
    out.push_str("\n#Improvement\nThe player can improve their strategy by:");
    for i in improvement {
        out.push_str(&format!("\n- {i}"));
    }
    out
}

/// Batched action labels, one bullet per step.
pub fn render_retro_actions(actions: &[(u32, String)]) -> String {
    actions
        .iter()
        .map(|(n, a)| format!("- Step {n}: {a}"))
        .collect::<Vec<_>>()
        .join("\n")
}

use std::collections::BTreeSet;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LfmError;
use crate::annotate::{
    AnnotateError, Annotator, Label, Privileged, TokenLedger, Window, WindowStep,
};
use crate::env::TaskFamily;
use crate::policy::{ContextWindow, Trajectory};
use crate::seeding;

/// One labelled step: context, action, its result and the annotator's
/// verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackExample {
    pub instance_id: String,
    pub rollout_id: String,
    /// 1-based step number.
    pub step: u32,
    pub family: TaskFamily,
    #[serde(flatten)]
    pub context: ContextWindow,
    pub action: String,
    pub result: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// One annotated window as persisted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub instance_id: String,
    pub rollout_id: String,
    pub instruction: String,
    pub window_start: u32,
    pub steps: Vec<WindowStep>,
    pub labels: Vec<Label>,
    pub explanations: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackDataset {
    pub annotator: String,
    pub windows: Vec<FeedbackRecord>,
    /// Per-step examples, one per (rollout, step) in first-seen order.
    pub examples: Vec<FeedbackExample>,
    /// Whether collection stopped because the budget ran out.
    pub exhausted: bool,
    /// Windows whose response could not be parsed.
    pub unparsed: usize,
    /// Step references dropped by the parser.
    pub dropped_refs: usize,
    pub ledger: TokenLedger,
}

impl FeedbackDataset {
    pub fn yes_count(&self) -> usize {
        self.examples
            .iter()
            .filter(|e| e.label == Label::Yes)
            .count()
    }
}

/// Every (trajectory, start) of a `window_len`-step window (shorter
/// trajectories contribute one window covering them), in seeded order.
pub fn sample_windows(trajs: &[Trajectory], window_len: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, t) in trajs.iter().enumerate() {
        if t.is_empty() {
            continue;
        }
        let len = window_len.clamp(1, t.len());
        for start in 0..=t.len() - len {
            out.push((i, start));
        }
    }
    out.shuffle(&mut seeding::rng(seed, "window-sampler", 0));
    out
}

/// Per-step examples of an annotated window.
pub fn unroll_window(
    traj: &Trajectory,
    window: &Window,
    labels: &[(Label, Option<String>)],
) -> Vec<FeedbackExample> {
    window
        .steps
        .iter()
        .zip(labels)
        .map(|(s, (label, explanation))| {
            let t = s.number as usize - 1;
            FeedbackExample {
                instance_id: traj.instance_id.clone(),
                rollout_id: traj.rollout_id.clone(),
                step: s.number,
                family: traj.instruction.family,
                context: traj.context_at(t),
                action: s.action.clone(),
                result: s.result.clone(),
                label: *label,
                explanation: explanation.clone(),
            }
        })
        .collect()
}

/// Annotate sampled windows of `trajs` until `window_count` windows are
/// labelled, the windows run out, or the ledger refuses a call.
pub fn build_feedback_dataset(
    trajs: &[Trajectory],
    annotator: &Annotator,
    annotator_id: &str,
    window_len: usize,
    window_count: usize,
    ledger: &Mutex<TokenLedger>,
    seed: u64,
) -> Result<FeedbackDataset, LfmError> {
    let mut ds = FeedbackDataset {
        annotator: annotator_id.to_string(),
        windows: Vec::new(),
        examples: Vec::new(),
        exhausted: false,
        unparsed: 0,
        dropped_refs: 0,
        ledger: ledger.lock().unwrap().clone(),
    };
    let mut seen = BTreeSet::new();
    for (ti, start) in sample_windows(trajs, window_len, seed) {
        if ds.windows.len() >= window_count {
            break;
        }
        let traj = &trajs[ti];
        let window = Window::from_trajectory(traj, start, window_len);
        let privileged = Privileged::from_trajectory(traj, &window);
        let parsed = match annotator.feedback(&window, &privileged, ledger) {
            Ok(p) => p,
            Err(AnnotateError::Budget(e)) => {
                tracing::info!(windows = ds.windows.len(), %e, "feedback budget exhausted");
                ds.exhausted = true;
                break;
            }
            Err(AnnotateError::Parse(m)) => {
                tracing::warn!(error = %m, "discarding window");
                ds.unparsed += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        ds.dropped_refs += parsed.dropped;
        let labels: Vec<(Label, Option<String>)> = parsed
            .labels
            .into_iter()
            .map(|f| (f.label, f.explanation))
            .collect();
        for ex in unroll_window(traj, &window, &labels) {
            if seen.insert((ex.instance_id.clone(), ex.rollout_id.clone(), ex.step)) {
                ds.examples.push(ex);
            }
        }
        ds.windows.push(FeedbackRecord {
            instance_id: window.instance_id,
            rollout_id: window.rollout_id,
            instruction: window.instruction,
            window_start: window.start,
            steps: window.steps,
            labels: labels.iter().map(|l| l.0).collect(),
            explanations: labels.into_iter().map(|l| l.1).collect(),
        });
    }
    ds.ledger = ledger.lock().unwrap().clone();
    Ok(ds)
}

/// Downsample the majority class to the minority's size, shuffle, and
/// split 80/20 into (train, validation).
pub fn balance_and_split(
    examples: &[FeedbackExample],
    seed: u64,
) -> Result<(Vec<FeedbackExample>, Vec<FeedbackExample>), LfmError> {
    let (mut yes, mut no): (Vec<&FeedbackExample>, Vec<&FeedbackExample>) =
        examples.iter().partition(|e| e.label == Label::Yes);
    if yes.is_empty() || no.is_empty() {
        return Err(LfmError::Unbalanced {
            yes: yes.len(),
            no: no.len(),
        });
    }
    let n = yes.len().min(no.len());
    yes.shuffle(&mut seeding::rng(seed, "balance-yes", 0));
    no.shuffle(&mut seeding::rng(seed, "balance-no", 0));
    let mut kept: Vec<FeedbackExample> = yes[..n]
        .iter()
        .chain(no[..n].iter())
        .map(|e| (*e).clone())
        .collect();
    kept.shuffle(&mut seeding::rng(seed, "balance-split", 0));
    let n_train = kept.len() * 4 / 5;
    let val = kept.split_off(n_train);
    Ok((kept, val))
}

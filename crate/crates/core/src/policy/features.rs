//! Context windows and hashed n-gram features.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::seeding::stable_hash;
use crate::tokenize::tokenize;

/// Number of prior steps kept in a context window.
pub const HISTORY_CAP: usize = 20;

/// Default feature-hash dimensionality.
pub const DEFAULT_HASH_DIM: u32 = 1 << 18;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistoryStep {
    pub observation: String,
    pub action: String,
}

/// Instruction, up to [`HISTORY_CAP`] most recent (observation, action)
/// pairs and the current observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextWindow {
    pub instruction: String,
    pub history: Vec<HistoryStep>,
    pub observation: String,
}

impl ContextWindow {
    pub fn new(instruction: impl Into<String>, observation: impl Into<String>) -> Self {
        ContextWindow {
            instruction: instruction.into(),
            history: Vec::new(),
            observation: observation.into(),
        }
    }

    /// Record `action` taken in the current observation and move to `next`.
    pub fn advance(&mut self, action: &str, next: impl Into<String>) {
        let obs = std::mem::replace(&mut self.observation, next.into());
        self.history.push(HistoryStep {
            observation: obs,
            action: action.to_string(),
        });
        if self.history.len() > HISTORY_CAP {
            let drop = self.history.len() - HISTORY_CAP;
            self.history.drain(..drop);
        }
    }
}

fn bucket(distance: usize) -> &'static str {
    match distance {
        1 => "1",
        2 => "2",
        3..=5 => "3",
        _ => "6",
    }
}

fn unigrams(prefix: &str, toks: &[String], out: &mut BTreeSet<String>) {
    for t in toks {
        out.insert(format!("{prefix}:{t}"));
    }
}

fn bigrams(prefix: &str, toks: &[String], out: &mut BTreeSet<String>) {
    for w in toks.windows(2) {
        out.insert(format!("{prefix}:{}_{}", w[0], w[1]));
    }
}

fn word_set(toks: &[String]) -> BTreeSet<&str> {
    toks.iter()
        .map(|s| s.as_str())
        .filter(|s| s.chars().any(|c| c.is_alphanumeric()))
        .collect()
}

/// Names of the features that depend only on the context.
pub fn context_feature_names(ctx: &ContextWindow) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let ins = tokenize(&ctx.instruction);
    unigrams("i", &ins, &mut out);
    bigrams("ib", &ins, &mut out);
    let obs = tokenize(&ctx.observation);
    unigrams("o", &obs, &mut out);
    bigrams("ob", &obs, &mut out);
    let ins_words = word_set(&ins);
    for w in word_set(&obs) {
        if ins_words.contains(w) {
            out.insert(format!("io:{w}"));
        }
    }
    let aligned = alignment("iom", &obs, &ins_words);
    // Conjoined with each instruction word.
    for u in &ins_words {
        if u.chars().all(|c| c.is_alphabetic()) {
            for f in &aligned {
                out.insert(format!("{u}&{f}"));
            }
        }
    }
    out.extend(aligned);
    let n = ctx.history.len();
    for (i, h) in ctx.history.iter().enumerate() {
        let b = bucket(n - i);
        unigrams(&format!("h{b}o"), &tokenize(&h.observation), &mut out);
        let act = tokenize(&h.action);
        unigrams(&format!("h{b}a"), &act, &mut out);
        bigrams(&format!("h{b}ab"), &act, &mut out);
    }
    out
}

/// Where instruction words occur in `toks`, by the up to three words to
/// their left ("carrying a", "you see a", "on the", ...).
fn alignment(prefix: &str, toks: &[String], ins_words: &BTreeSet<&str>) -> Vec<String> {
    let alpha: Vec<&str> = toks
        .iter()
        .map(|s| s.as_str())
        .filter(|s| s.chars().all(|c| c.is_alphabetic()))
        .collect();
    let mut out = Vec::new();
    for (i, w) in alpha.iter().enumerate() {
        if ins_words.contains(w) {
            for k in 1..=3.min(i) {
                out.push(format!("{prefix}{k}:{}", alpha[i - k..i].join("_")));
            }
        }
    }
    out
}

/// Names of the features that involve the candidate action.
pub fn action_feature_names(ctx: &ContextWindow, action: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let act = tokenize(action);
    unigrams("a", &act, &mut out);
    bigrams("ab", &act, &mut out);
    let ins = tokenize(&ctx.instruction);
    let act_words = word_set(&act);
    for iw in word_set(&ins) {
        for aw in &act_words {
            out.insert(format!("ia:{iw}|{aw}"));
        }
    }
    let ins_words = word_set(&ins);
    let obs = tokenize(&ctx.observation);
    let obs_words = word_set(&obs);
    for w in &act_words {
        if ins_words.contains(w) {
            out.insert(format!("ova:{w}"));
        }
        if obs_words.contains(w) {
            out.insert(format!("oa:{w}"));
        }
    }
    // Which argument positions of the action name an instruction word.
    let verb = act.first().map(|s| s.as_str()).unwrap_or("");
    let pos: Vec<String> = act
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, w)| ins_words.contains(w.as_str()))
        .map(|(i, _)| i.to_string())
        .collect();
    out.insert(format!("vpos:{verb}|{}", pos.join("_")));
    let n = ctx.history.len();
    for (i, h) in ctx.history.iter().enumerate() {
        if h.action == action {
            out.insert(format!("rep:{}", bucket(n - i)));
        }
    }
    out
}

/// Names of the features describing the outcome of an action.
pub fn result_feature_names(ctx: &ContextWindow, action: &str, result: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let res = tokenize(result);
    unigrams("r", &res, &mut out);
    bigrams("rb", &res, &mut out);
    let ins = tokenize(&ctx.instruction);
    let ins_words = word_set(&ins);
    let res_words = word_set(&res);
    for w in &res_words {
        if ins_words.contains(w) {
            out.insert(format!("ovr:{w}"));
        }
    }
    let act = tokenize(action);
    let verb = act.first().map(|s| s.as_str()).unwrap_or("");
    for w in &res_words {
        if ins_words.contains(w) {
            out.insert(format!("vr:{verb}|{w}"));
        }
    }
    for f in alignment("rm", &res, &ins_words) {
        out.insert(format!("{verb}&{f}"));
        out.insert(f);
    }
    out
}

pub fn hash_feature(name: &str, dim: u32) -> u32 {
    (stable_hash(&[name.as_bytes()]) % dim as u64) as u32
}

fn hash_all<'a>(names: impl Iterator<Item = &'a String>, dim: u32) -> Vec<u32> {
    let mut v: Vec<u32> = names.map(|n| hash_feature(n, dim)).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Sorted, duplicate-free hashed context features.
pub fn context_features(ctx: &ContextWindow, dim: u32) -> Vec<u32> {
    hash_all(context_feature_names(ctx).iter(), dim)
}

/// Binary hashed features of (context, candidate action), sorted and
/// duplicate-free.
pub fn featurize(ctx: &ContextWindow, action: &str, dim: u32) -> Vec<u32> {
    let c = context_feature_names(ctx);
    let a = action_feature_names(ctx, action);
    hash_all(c.iter().chain(a.iter()), dim)
}

/// Features used by the feedback classifier: context, action and result.
pub fn feedback_features(ctx: &ContextWindow, action: &str, result: &str, dim: u32) -> Vec<u32> {
    let c = context_feature_names(ctx);
    let a = action_feature_names(ctx, action);
    let r = result_feature_names(ctx, action, result);
    hash_all(c.iter().chain(a.iter()).chain(r.iter()), dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_keeps_the_latest_twenty_steps() {
        let mut ctx = ContextWindow::new("put a mug in shelf", "o0");
        for i in 0..25 {
            ctx.advance(&format!("look {i}"), format!("o{}", i + 1));
        }
        assert_eq!(ctx.history.len(), HISTORY_CAP);
        assert_eq!(ctx.history[0].action, "look 5");
        assert_eq!(ctx.observation, "o25");
    }

    #[test]
    fn one_word_difference_changes_features() {
        let ctx = ContextWindow::new("put a mug in shelf", "You arrive at loc 3.");
        let a = featurize(&ctx, "go to shelf 1", DEFAULT_HASH_DIM);
        let b = featurize(&ctx, "go to cabinet 1", DEFAULT_HASH_DIM);
        assert_ne!(a, b);
        assert_eq!(a, featurize(&ctx, "go to shelf 1", DEFAULT_HASH_DIM));
    }
}

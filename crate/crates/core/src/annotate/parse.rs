use std::collections::BTreeMap;

use super::{AnnotateError, Label, StepFeedback, Window};
use crate::tokenize::tokenize;

/// Minimum token overlap for a non-exact action match.
const MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFeedback {
    /// One label per window step, in step order.
    pub labels: Vec<StepFeedback>,
    /// Bullets naming a step outside the window or a step already named.
    pub dropped: usize,
}

/// (step number, text after the step number)
fn bullet_body(body: &str) -> Option<(u32, String)> {
    let body = body.trim();
    let lower = body.to_ascii_lowercase();
    let rest = lower.strip_prefix("step")?;
    let offset = body.len() - rest.len();
    let rest_orig = &body[offset..];
    let trimmed = rest_orig.trim_start();
    let digits: String = trimmed.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        return None;
    }
    let n = digits.parse().ok()?;
    let tail = trimmed[digits.len()..]
        .trim_start_matches(|c: char| c == ':' || c == '.' || c == '-' || c.is_whitespace())
        .trim_end();
    Some((n, tail.to_string()))
}

fn strip_bullet(line: &str) -> Option<&str> {
    let t = line.trim_start();
    t.strip_prefix('-').or_else(|| t.strip_prefix('*'))
}

/// Bullets of the form "- Step N[: text]" in `body`; continuation lines are
/// appended to the previous bullet's text; a "#" heading ends the list.
fn bullets(first_line_rest: &str, body: &str) -> Vec<(u32, String)> {
    let mut out: Vec<(u32, String)> = Vec::new();
    for piece in first_line_rest.split(['-', '*']) {
        if let Some(b) = bullet_body(piece) {
            out.push(b);
        }
    }
    let mut open = !out.is_empty();
    for line in body.lines() {
        let t = line.trim();
        if t.starts_with('#') {
            break;
        }
        if t.is_empty() {
            open = false;
            continue;
        }
        match strip_bullet(t).and_then(bullet_body) {
            Some(b) => {
                out.push(b);
                open = true;
            }
            None if strip_bullet(t).is_some() => open = false,
            None => {
                if open {
                    let last = &mut out.last_mut().unwrap().1;
                    if !last.is_empty() {
                        last.push(' ');
                    }
                    last.push_str(t);
                }
            }
        }
    }
    out
}

fn split_head(response: &str) -> Option<(Label, &str, &str)> {
    let text = response.trim_start();
    let (first, body) = match text.find('\n') {
        Some(i) => (&text[..i], &text[i + 1..]),
        None => (text, ""),
    };
    let word_end = first.find(char::is_whitespace).unwrap_or(first.len());
    let head = first[..word_end]
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_ascii_lowercase();
    let label = match head.as_str() {
        "yes" => Label::Yes,
        "no" => Label::No,
        _ => return None,
    };
    Some((label, &first[word_end..], body))
}

/// Parse "Yes / - Step N ..." or "No" annotator output over `window`.
pub fn parse_step_feedback(
    response: &str,
    window: &Window,
) -> Result<ParsedFeedback, AnnotateError> {
    let (head, rest, body) = split_head(response).ok_or_else(|| {
        AnnotateError::Parse(format!(
            "expected a yes/no answer, got `{}`",
            response.trim().chars().take(40).collect::<String>()
        ))
    })?;
    let mut yes: BTreeMap<u32, Option<String>> = BTreeMap::new();
    let mut dropped = 0;
    if head == Label::Yes {
        for (n, text) in bullets(rest, body) {
            if !window.contains(n) || yes.contains_key(&n) {
                dropped += 1;
                continue;
            }
            yes.insert(n, if text.is_empty() { None } else { Some(text) });
        }
    }
    if dropped > 0 {
        tracing::warn!(dropped, "dropped out-of-range or repeated step references");
    }
    let labels = window
        .steps
        .iter()
        .map(|s| match yes.remove(&s.number) {
            Some(explanation) => StepFeedback {
                step: s.number,
                label: Label::Yes,
                explanation,
            },
            None => StepFeedback::new(s.number, Label::No),
        })
        .collect();
    Ok(ParsedFeedback { labels, dropped })
}

/// Lowercase, trim, collapse whitespace and drop a trailing period.
pub fn normalize_action(text: &str) -> String {
    let first = text.trim().lines().next().unwrap_or("");
    let joined = first
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    joined.trim_end_matches('.').trim_end().to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionMatch {
    pub index: usize,
    pub action: String,
    /// False when the match was recovered by token overlap.
    pub exact: bool,
}

fn overlap(a: &[String], b: &[String]) -> f64 {
    let mut pool: Vec<&String> = b.iter().collect();
    let mut common = 0;
    for t in a {
        if let Some(i) = pool.iter().position(|x| *x == t) {
            pool.swap_remove(i);
            common += 1;
        }
    }
    common as f64 / a.len().max(b.len()).max(1) as f64
}

/// Map a free-text action prediction onto a candidate.
pub fn parse_action_prediction(
    response: &str,
    candidates: &[String],
) -> Result<ActionMatch, AnnotateError> {
    let norm = normalize_action(response);
    if let Some(i) = candidates.iter().position(|c| normalize_action(c) == norm) {
        return Ok(ActionMatch {
            index: i,
            action: candidates[i].clone(),
            exact: true,
        });
    }
    let toks = tokenize(&norm);
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = overlap(&toks, &tokenize(c));
        if s > best.map(|b| b.1).unwrap_or(0.0) {
            best = Some((i, s));
        }
    }
    match best {
        Some((i, s)) if s >= MATCH_THRESHOLD => Ok(ActionMatch {
            index: i,
            action: candidates[i].clone(),
            exact: false,
        }),
        _ => Err(AnnotateError::Parse(format!(
            "`{norm}` matches no available action"
        ))),
    }
}

/// Parse batched action labels "- Step N: <action>"; returns the matched
/// actions and the number of bullets that were dropped.
pub fn parse_retro_actions(
    response: &str,
    window: &Window,
    candidates: &[Vec<String>],
) -> (Vec<(u32, ActionMatch)>, usize) {
    let mut out: Vec<(u32, ActionMatch)> = Vec::new();
    let mut dropped = 0;
    for (n, text) in bullets("", response) {
        if !window.contains(n) || out.iter().any(|(m, _)| *m == n) {
            dropped += 1;
            continue;
        }
        let idx = (n - window.first_number()) as usize;
        match candidates
            .get(idx)
            .map(|c| parse_action_prediction(&text, c))
        {
            Some(Ok(m)) => out.push((n, m)),
            _ => dropped += 1,
        }
    }
    out.sort_by_key(|(n, _)| *n);
    (out, dropped)
}

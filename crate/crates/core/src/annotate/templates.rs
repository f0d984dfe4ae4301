//! Explanation templates for detailed feedback, keyed on (label, action
//! verb class, task family). `{act}` stands for the action phrased in the
//! third person ("takes candle 3 from countertop 1").

use std::fmt;

use super::Label;
use crate::env::house::XL_VERBS;
use crate::env::TaskFamily;

const HOUSE_VERBS: &[&str] = &[
    "go",
    "open",
    "close",
    "take",
    "put",
    "clean",
    "heat",
    "cool",
    "slice",
    "examine",
    "look",
    "inventory",
];

/// Coarse class of an action: its house verb, "fidget" for the filler
/// verbs of the large action space, or "move" for street directions.
pub fn verb_class(action: &str) -> &'static str {
    if XL_VERBS
        .iter()
        .any(|v| action.starts_with(&format!("{v} ")))
    {
        return "fidget";
    }
    let first = action.split_whitespace().next().unwrap_or("");
    HOUSE_VERBS
        .iter()
        .find(|v| **v == first)
        .copied()
        .unwrap_or("move")
}

/// The action in the third person.
pub fn third_person(action: &str) -> String {
    if verb_class(action) == "move" {
        return format!("heads {action}");
    }
    let (verb, rest) = action.split_once(' ').unwrap_or((action, ""));
    let verb3 = if verb.ends_with('s')
        || verb.ends_with("sh")
        || verb.ends_with("ch")
        || verb.ends_with('o')
    {
        format!("{verb}es")
    } else {
        format!("{verb}s")
    };
    if rest.is_empty() {
        verb3
    } else {
        format!("{verb3} {rest}")
    }
}

pub fn family_purpose(family: TaskFamily) -> &'static str {
    match family {
        TaskFamily::Put => "placing the object where the task asks",
        TaskFamily::PutClean => "placing a clean object where the task asks",
        TaskFamily::HeatPut => "placing a hot object where the task asks",
        TaskFamily::CoolPut => "placing a cool object where the task asks",
        TaskFamily::PutTwo => "placing both objects where the task asks",
        TaskFamily::Navigate => "reaching the place the instructions describe",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TemplateKey {
    pub label: Label,
    pub verb: &'static str,
    pub family: TaskFamily,
}

impl TemplateKey {
    pub fn of(label: Label, action: &str, family: TaskFamily) -> Self {
        TemplateKey {
            label,
            verb: verb_class(action),
            family,
        }
    }
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}",
            self.label.as_str(),
            self.verb,
            self.family.tag()
        )
    }
}

/// Built-in explanation template for `key`.
pub fn default_template(key: TemplateKey) -> String {
    let purpose = family_purpose(key.family);
    match (key.label, key.verb) {
        (Label::Yes, "go" | "move") => {
            format!("The player successfully {{act}}, getting closer to {purpose}.")
        }
        (Label::Yes, _) => {
            format!("The player successfully {{act}}, a necessary part of {purpose}.")
        }
        (Label::No, "fidget" | "examine" | "look" | "inventory") => {
            format!("The player {{act}}, which does not change anything needed for {purpose}.")
        }
        (Label::No, _) => {
            format!("The player {{act}}, which does not bring them closer to {purpose}.")
        }
    }
}

/// Fill a template for `action`.
pub fn fill(template: &str, action: &str) -> String {
    template.replace("{act}", &third_person(action))
}

/// Recover the template behind an explanation of `action`, if the
/// explanation mentions the action.
pub fn abstract_explanation(explanation: &str, action: &str) -> Option<String> {
    let act = third_person(action);
    explanation
        .contains(&act)
        .then(|| explanation.replacen(&act, "{act}", 1))
}

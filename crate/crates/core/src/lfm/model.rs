use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FeedbackExample, LfmError};
use crate::annotate::{abstract_explanation, default_template, fill, Label, TemplateKey};
use crate::env::TaskFamily;
use crate::policy::features::{feedback_features, DEFAULT_HASH_DIM};
use crate::policy::ContextWindow;
use crate::seeding;
use crate::tokenize::TOKENIZER_ID;

pub const FEEDBACK_FORMAT_VERSION: u32 = 1;

fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    0.1
}
fn default_l2() -> f64 {
    1e-6
}
fn default_patience() -> usize {
    3
}
fn default_dim() -> u32 {
    DEFAULT_HASH_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackHyper {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_l2")]
    pub l2: f64,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_dim")]
    pub hash_dim: u32,
}

impl Default for FeedbackHyper {
    fn default() -> Self {
        FeedbackHyper {
            epochs: default_epochs(),
            batch: default_batch(),
            learning_rate: default_lr(),
            l2: default_l2(),
            patience: default_patience(),
            hash_dim: default_dim(),
        }
    }
}

/// Logistic classifier over hashed (context, action, result) features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackModel {
    pub format_version: u32,
    pub tokenizer_id: String,
    pub detailed: bool,
    pub hash_dim: u32,
    #[serde(with = "crate::sparse")]
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Explanation templates by "label|verb|family" (detailed mode).
    pub templates: BTreeMap<String, String>,
    pub hyper: FeedbackHyper,
}

/// Feature ids and target of one example.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub feats: Vec<u32>,
    pub yes: bool,
}

pub fn encode(ex: &FeedbackExample, dim: u32) -> Encoded {
    Encoded {
        feats: feedback_features(&ex.context, &ex.action, &ex.result, dim),
        yes: ex.label == Label::Yes,
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// -ln sigmoid(z), computed stably.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Sparse gradient of the mean cross-entropy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackGradient {
    pub weights: BTreeMap<u32, f64>,
    pub bias: f64,
}

impl FeedbackModel {
    pub fn zero(hyper: &FeedbackHyper, detailed: bool) -> Self {
        FeedbackModel {
            format_version: FEEDBACK_FORMAT_VERSION,
            tokenizer_id: TOKENIZER_ID.to_string(),
            detailed,
            hash_dim: hyper.hash_dim,
            weights: vec![0.0; hyper.hash_dim as usize],
            bias: 0.0,
            templates: BTreeMap::new(),
            hyper: hyper.clone(),
        }
    }

    pub fn logit(&self, feats: &[u32]) -> f64 {
        self.bias + feats.iter().map(|&f| self.weights[f as usize]).sum::<f64>()
    }

    /// (p(yes), p(no)).
    pub fn probs(&self, ctx: &ContextWindow, action: &str, result: &str) -> (f64, f64) {
        let z = self.logit(&feedback_features(ctx, action, result, self.hash_dim));
        (sigmoid(z), sigmoid(-z))
    }

    pub fn p_yes(&self, ctx: &ContextWindow, action: &str, result: &str) -> f64 {
        self.probs(ctx, action, result).0
    }

    /// Mean cross-entropy and its gradient (without regularization).
    pub fn loss_and_gradient(&self, data: &[Encoded]) -> (f64, FeedbackGradient) {
        self.batch_loss_and_gradient(&data.iter().collect::<Vec<_>>())
    }

    fn batch_loss_and_gradient(&self, data: &[&Encoded]) -> (f64, FeedbackGradient) {
        let mut g = FeedbackGradient::default();
        let mut loss = 0.0;
        let scale = 1.0 / data.len().max(1) as f64;
        for e in data {
            let z = self.logit(&e.feats);
            loss += if e.yes {
                softplus_neg(z)
            } else {
                softplus_neg(-z)
            };
            let d = (sigmoid(z) - if e.yes { 1.0 } else { 0.0 }) * scale;
            g.bias += d;
            for &f in &e.feats {
                *g.weights.entry(f).or_insert(0.0) += d;
            }
        }
        (loss * scale, g)
    }

    pub fn mean_loss(&self, data: &[Encoded]) -> f64 {
        self.loss_and_gradient(data).0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feedback model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LfmError> {
        let m: FeedbackModel =
            serde_json::from_str(s).map_err(|e| LfmError::Model(e.to_string()))?;
        if m.tokenizer_id != TOKENIZER_ID {
            return Err(LfmError::Model(format!(
                "model uses tokenizer `{}`, this build has `{TOKENIZER_ID}`",
                m.tokenizer_id
            )));
        }
        if m.weights.len() != m.hash_dim as usize {
            return Err(LfmError::Model(
                "weight vector does not match hash_dim".into(),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), LfmError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| LfmError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, LfmError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| LfmError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// Whether the model judges `action` productive: p(yes) > p(no), with ties
/// counted as not desirable.
pub fn desirable(model: &FeedbackModel, ctx: &ContextWindow, action: &str, result: &str) -> bool {
    let (y, n) = model.probs(ctx, action, result);
    y > n
}

/// Label plus a templated explanation, e.g. "Yes. The player successfully
/// takes ...".
pub fn detailed_infer(
    model: &FeedbackModel,
    ctx: &ContextWindow,
    action: &str,
    result: &str,
    family: TaskFamily,
) -> (Label, String) {
    let label = Label::from_bool(desirable(model, ctx, action, result));
    let key = TemplateKey::of(label, action, family);
    let template = model
        .templates
        .get(&key.to_string())
        .cloned()
        .unwrap_or_else(|| default_template(key));
    let head = match label {
        Label::Yes => "Yes.",
        Label::No => "No.",
    };
    (label, format!("{head} {}", fill(&template, action)))
}

/// Most frequent template per key among the explanations in `data`
/// (ties broken by the smaller template text).
pub fn learn_templates(data: &[FeedbackExample]) -> BTreeMap<String, String> {
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for ex in data {
        let Some(text) = &ex.explanation else {
            continue;
        };
        let Some(t) = abstract_explanation(text, &ex.action) else {
            continue;
        };
        let key = TemplateKey::of(ex.label, &ex.action, ex.family).to_string();
        *counts.entry(key).or_default().entry(t).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(k, ts)| {
            let best = ts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(t, _)| t)
                .unwrap();
            (k, best)
        })
        .collect()
}

struct AdaGrad {
    acc: Vec<f64>,
    bias: f64,
}

/// Minimize cross-entropy with AdaGrad and L2, keeping the parameters with
/// the best validation loss (checked after every epoch).
pub fn train_feedback_model(
    train: &[FeedbackExample],
    val: &[FeedbackExample],
    hyper: &FeedbackHyper,
    detailed: bool,
    seed: u64,
) -> Result<FeedbackModel, LfmError> {
    if train.is_empty() {
        return Err(LfmError::Empty);
    }
    let mut model = FeedbackModel::zero(hyper, detailed);
    if detailed {
        model.templates = learn_templates(train);
    }
    let tr: Vec<Encoded> = train.iter().map(|e| encode(e, hyper.hash_dim)).collect();
    let va: Vec<Encoded> = val.iter().map(|e| encode(e, hyper.hash_dim)).collect();
    let mut opt = AdaGrad {
        acc: vec![0.0; hyper.hash_dim as usize],
        bias: 0.0,
    };
    let mut order: Vec<usize> = (0..tr.len()).collect();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut stale = 0;
    let batch = hyper.batch.max(1);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut seeding::rng(seed, "feedback-epoch", epoch as u64));
        for chunk in order.chunks(batch) {
            let b: Vec<&Encoded> = chunk.iter().map(|&i| &tr[i]).collect();
            let (_, g) = model.batch_loss_and_gradient(&b);
            for (&f, gr) in &g.weights {
                let w = &mut model.weights[f as usize];
                let gk = gr + hyper.l2 * *w;
                opt.acc[f as usize] += gk * gk;
                *w -= hyper.learning_rate * gk / (opt.acc[f as usize].sqrt() + 1e-8);
            }
            opt.bias += g.bias * g.bias;
            model.bias -= hyper.learning_rate * g.bias / (opt.bias.sqrt() + 1e-8);
        }
        if va.is_empty() {
            continue;
        }
        let vl = model.mean_loss(&va);
        tracing::debug!(epoch, val_loss = vl, "feedback validation");
        match &best {
            Some((b, _, _)) if vl >= *b => {
                stale += 1;
                if stale >= hyper.patience {
                    break;
                }
            }
            _ => {
                best = Some((vl, model.weights.clone(), model.bias));
                stale = 0;
            }
        }
    }
    if let Some((_, w, b)) = best {
        model.weights = w;
        model.bias = b;
    }
    Ok(model)
}

//! Cross-entropy training of the action scorer over candidate sets.

use std::collections::{BTreeMap, BTreeSet};

use fnv::FnvHashMap;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::ContextWindow;
use super::model::{log_softmax_into, PolicyHyper, PolicyModel, Scoring};
use crate::seeding;
use crate::tokenize::tokenize;

/// One (instruction, context, target action) record with its candidate set
/// and provenance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImitationExample {
    pub instance_id: String,
    pub rollout_id: String,
    pub round: u32,
    pub step: u32,
    #[serde(flatten)]
    pub context: ContextWindow,
    pub action: String,
    pub candidates: Vec<String>,
}

impl ImitationExample {
    /// The learning content, without provenance.
    pub fn content_key(&self) -> (&ContextWindow, &str, &[String]) {
        (&self.context, &self.action, &self.candidates)
    }
}

/// Union of datasets with exact-content duplicates removed; the first
/// occurrence (earliest dataset) is kept.
pub fn dedup_union<'a>(
    sets: impl IntoIterator<Item = &'a [ImitationExample]>,
) -> Vec<ImitationExample> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for set in sets {
        for ex in set {
            let key = serde_json::to_string(&ex.content_key()).expect("examples serialize");
            if seen.insert(key) {
                out.push(ex.clone());
            }
        }
    }
    out
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error("no training examples")]
    Empty,
    #[error("example {index} ({instance_id} step {step}): target `{action}` is not among its candidates")]
    TargetNotInCandidates {
        index: usize,
        instance_id: String,
        step: u32,
        action: String,
    },
}

/// An example converted to feature and token ids.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scoring: Scoring,
    pub cands: Vec<Vec<u32>>,
    pub target: usize,
}

/// Sparse gradient of the mean loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub rows: BTreeMap<u32, Vec<f64>>,
    pub transition: BTreeMap<usize, Vec<f64>>,
    pub relation: FnvHashMap<u32, f64>,
}

pub fn prepare(
    model: &PolicyModel,
    ctx: &ContextWindow,
    candidates: &[String],
    target: usize,
) -> Prepared {
    Prepared {
        scoring: model.prepare_context(ctx),
        cands: candidates.iter().map(|a| model.action_ids(a)).collect(),
        target,
    }
}

/// Loss of one example; if `grad` is given, adds `scale` times the
/// example's gradient to it.
pub fn example_loss(model: &PolicyModel, ex: &Prepared, grad: Option<(&mut Gradient, f64)>) -> f64 {
    let c = model.context_logits(&ex.scoring.feats);
    // Per previous token: relation ids and log-probabilities.
    let mut logp: BTreeMap<usize, (Vec<Vec<u32>>, Vec<f64>)> = BTreeMap::new();
    let mut scores = Vec::with_capacity(ex.cands.len());
    for ids in &ex.cands {
        let mut prev = model.bos();
        let mut total = 0.0;
        for &t in ids {
            let lp = logp.entry(prev).or_insert_with(|| {
                let rel_ids = model.relation_ids(&ex.scoring.rel, prev);
                let logits = model.logits_after(&c, &rel_ids, prev);
                let mut out = vec![0.0; logits.len()];
                log_softmax_into(&logits, &mut out);
                (rel_ids, out)
            });
            total += lp.1[t as usize];
            prev = t as usize;
        }
        scores.push(total / ids.len() as f64);
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    let loss = lse - scores[ex.target];
    if let Some((g, scale)) = grad {
        let v = model.vocab_size();
        // A_p[v] and B_p per previous token p.
        let mut acc: BTreeMap<usize, (Vec<f64>, f64)> = BTreeMap::new();
        for (a, ids) in ex.cands.iter().enumerate() {
            let q = (scores[a] - lse).exp();
            let coef = (q - if a == ex.target { 1.0 } else { 0.0 }) / ids.len() as f64;
            if coef == 0.0 {
                continue;
            }
            let mut prev = model.bos();
            for &t in ids {
                let e = acc.entry(prev).or_insert_with(|| (vec![0.0; v], 0.0));
                e.0[t as usize] += coef;
                e.1 += coef;
                prev = t as usize;
            }
        }
        let mut sum = vec![0.0; v];
        for (p, (a_p, b_p)) in acc {
            let (rel_ids, probs) = &logp[&p];
            let row = g.transition.entry(p).or_insert_with(|| vec![0.0; v]);
            for k in 0..v {
                let gk = a_p[k] - b_p * probs[k].exp();
                row[k] += scale * gk;
                sum[k] += gk;
                for id in &rel_ids[k] {
                    *g.relation.entry(*id).or_insert(0.0) += scale * gk;
                }
            }
        }
        for f in &ex.scoring.feats {
            let row = g.rows.entry(*f).or_insert_with(|| vec![0.0; v]);
            for k in 0..v {
                row[k] += scale * sum[k];
            }
        }
    }
    loss
}

/// Mean loss and its gradient over `examples`.
pub fn loss_and_gradient(model: &PolicyModel, examples: &[Prepared]) -> (f64, Gradient) {
    let mut g = Gradient::default();
    let scale = 1.0 / examples.len() as f64;
    let mut total = 0.0;
    for ex in examples {
        total += example_loss(model, ex, Some((&mut g, scale)));
    }
    (total * scale, g)
}

pub fn mean_loss(model: &PolicyModel, examples: &[Prepared]) -> f64 {
    examples
        .iter()
        .map(|e| example_loss(model, e, None))
        .sum::<f64>()
        / examples.len() as f64
}

fn check(data: &[ImitationExample]) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    for (index, ex) in data.iter().enumerate() {
        if !ex.candidates.contains(&ex.action) {
            return Err(TrainError::TargetNotInCandidates {
                index,
                instance_id: ex.instance_id.clone(),
                step: ex.step,
                action: ex.action.clone(),
            });
        }
    }
    Ok(())
}

fn prepare_all(model: &PolicyModel, data: &[ImitationExample]) -> Vec<Prepared> {
    data.iter()
        .map(|ex| {
            let target = ex.candidates.iter().position(|c| c == &ex.action).unwrap();
            prepare(model, &ex.context, &ex.candidates, target)
        })
        .collect()
}

struct AdaGrad {
    rows: BTreeMap<u32, Vec<f64>>,
    transition: Vec<f64>,
    relation: Vec<f64>,
}

impl AdaGrad {
    fn apply(&mut self, model: &mut PolicyModel, g: &Gradient, lr: f64, wd: f64) {
        let v = model.vocab_size();
        for (f, gr) in &g.rows {
            let w = model.rows.entry(*f).or_insert_with(|| vec![0.0; v]);
            let a = self.rows.entry(*f).or_insert_with(|| vec![0.0; v]);
            for ((wk, ak), gk) in w.iter_mut().zip(a.iter_mut()).zip(gr) {
                let gk = gk + wd * *wk;
                *ak += gk * gk;
                *wk -= lr * gk / (ak.sqrt() + 1e-8);
            }
        }
        for (p, gr) in &g.transition {
            for (k, g0) in gr.iter().enumerate() {
                let idx = p * v + k;
                let gk = g0 + wd * model.transition[idx];
                self.transition[idx] += gk * gk;
                model.transition[idx] -= lr * gk / (self.transition[idx].sqrt() + 1e-8);
            }
        }
        for (&id, gr) in &g.relation {
            let (w, a) = (
                &mut model.relation[id as usize],
                &mut self.relation[id as usize],
            );
            let gk = gr + wd * *w;
            *a += gk * gk;
            *w -= lr * gk / (a.sqrt() + 1e-8);
        }
    }
}

/// Split demonstration examples (round 0) into a seeded validation part;
/// returns (train, validation).
pub fn validation_split(
    data: &[ImitationExample],
    fraction: f64,
    seed: u64,
) -> (Vec<ImitationExample>, Vec<ImitationExample>) {
    let demos: Vec<usize> = (0..data.len()).filter(|&i| data[i].round == 0).collect();
    let n_val = (demos.len() as f64 * fraction).floor() as usize;
    if n_val == 0 || n_val == data.len() {
        return (data.to_vec(), Vec::new());
    }
    let mut picked = demos;
    picked.shuffle(&mut seeding::rng(seed, "policy-validation", 0));
    let val_set: BTreeSet<usize> = picked[..n_val].iter().cloned().collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, ex) in data.iter().enumerate() {
        if val_set.contains(&i) {
            val.push(ex.clone());
        } else {
            train.push(ex.clone());
        }
    }
    (train, val)
}

/// Vocabulary of every candidate token in `data`.
pub fn candidate_vocab(data: &[ImitationExample]) -> BTreeSet<String> {
    let mut vocab = BTreeSet::new();
    for ex in data {
        for c in &ex.candidates {
            vocab.extend(tokenize(c));
        }
    }
    vocab
}

/// Train on `train`, early-stopping on `val` when it is non-empty.
pub fn train_policy_split(
    train: &[ImitationExample],
    val: &[ImitationExample],
    hyper: &PolicyHyper,
    seed: u64,
) -> Result<PolicyModel, TrainError> {
    check(train)?;
    check(val).or_else(|e| if val.is_empty() { Ok(()) } else { Err(e) })?;
    let mut vocab = candidate_vocab(train);
    vocab.extend(candidate_vocab(val));
    let mut model = PolicyModel::zero(vocab, hyper.clone());
    let tr = prepare_all(&model, train);
    let va = prepare_all(&model, val);
    let mut opt = AdaGrad {
        rows: BTreeMap::new(),
        transition: vec![0.0; model.transition.len()],
        relation: vec![0.0; model.relation.len()],
    };
    let mut rng = seeding::rng(seed, "policy-batches", 0);
    let mut best: Option<(f64, PolicyModel)> = None;
    let mut stale = 0;
    let batch = hyper.batch.max(1);
    for step in 0..hyper.steps {
        let mut g = Gradient::default();
        let scale = 1.0 / batch as f64;
        for _ in 0..batch {
            let i = rng.gen_range(0..tr.len());
            example_loss(&model, &tr[i], Some((&mut g, scale)));
        }
        opt.apply(&mut model, &g, hyper.learning_rate, hyper.weight_decay);
        let last = step + 1 == hyper.steps;
        if !va.is_empty() && ((step + 1) % hyper.eval_every.max(1) == 0 || last) {
            let vl = mean_loss(&model, &va);
            tracing::debug!(step = step + 1, val_loss = vl, "policy validation");
            match &best {
                Some((b, _)) if vl >= *b => {
                    stale += 1;
                    if stale >= hyper.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((vl, model.clone()));
                    stale = 0;
                }
            }
        }
    }
    Ok(best.map(|(_, m)| m).unwrap_or(model))
}

/// Train on `data`, holding out a seeded share of the demonstrations for
/// early stopping.
pub fn train_policy(
    data: &[ImitationExample],
    hyper: &PolicyHyper,
    seed: u64,
) -> Result<PolicyModel, TrainError> {
    check(data)?;
    let (train, val) = validation_split(data, hyper.val_fraction, seed);
    train_policy_split(&train, &val, hyper, seed)
}

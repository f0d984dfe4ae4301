//! Token-level action scorer.
//!
//! Each action token is predicted by a softmax over the action vocabulary.
//! Its logits sum three parts:
//! - a context layer: one row of logits per active hashed context feature,
//! - a transition row selected by the previous action token,
//! - a relation layer: shared scalar weights on hashed features that relate
//!   the candidate token to the context (the token occurs in the
//!   instruction, the token pair occurs in the observation, ...), alone and
//!   conjoined with the previous token.
//!
//! An action's score is its mean per-token negative log-likelihood.

use std::collections::{BTreeMap, HashMap};

use fnv::FnvHashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::features::{context_features, hash_feature, ContextWindow, DEFAULT_HASH_DIM};
use crate::tokenize::{tokenize, TOKENIZER_ID};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyHyper {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Validation loss is measured every `eval_every` optimizer steps.
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: usize,
    pub val_fraction: f64,
    pub hash_dim: u32,
}

impl Default for PolicyHyper {
    fn default() -> Self {
        PolicyHyper {
            steps: 10_000,
            batch: 20,
            learning_rate: 0.1,
            weight_decay: 1e-3,
            eval_every: 500,
            patience: 4,
            val_fraction: 0.1,
            hash_dim: DEFAULT_HASH_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub format_version: u32,
    pub tokenizer_id: String,
    pub hash_dim: u32,
    /// Index 0 is the unknown token; the rest is sorted.
    pub vocab: Vec<String>,
    /// Context layer: feature id -> logits over the vocabulary.
    pub rows: BTreeMap<u32, Vec<f64>>,
    /// Transition layer: (vocab + 1) rows of logits, the last row is the
    /// begin-of-action state.
    pub transition: Vec<f64>,
    /// Relation layer: one weight per hashed relation feature.
    #[serde(with = "crate::sparse")]
    pub relation: Vec<f64>,
    pub hyper: PolicyHyper,
    /// Hashed relation ids per (previous token, flag): plain then conjoined.
    #[serde(skip)]
    rel_table: OnceLock<Vec<[u32; 2 * REL_FLAGS.len()]>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file is not valid: {0}")]
    Format(#[from] serde_json::Error),
    #[error("model tokenizer `{found}` does not match `{expected}`")]
    Tokenizer { found: String, expected: String },
    #[error("model has non-finite parameters")]
    NonFinite,
}

pub(crate) fn log_softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let lz = m + z.ln();
    for (o, l) in out.iter_mut().zip(logits) {
        *o = l - lz;
    }
}

const REL_FLAGS: [&str; 11] = [
    "ins", "obs", "bg_ins", "bg_obs", "h1", "bg_h1", "h2", "bg_h2", "h3", "bg_h3", "pobs",
];

/// Relation flags of a context: per-token unigram flags and, per previous
/// token, the flags of token pairs.
#[derive(Debug, Clone, Default)]
pub struct Relations {
    uni: Vec<u16>,
    pairs: FnvHashMap<usize, Vec<(u32, u16)>>,
}

const F_INS: u16 = 1 << 0;
const F_OBS: u16 = 1 << 1;
const F_BG_INS: u16 = 1 << 2;
const F_BG_OBS: u16 = 1 << 3;
const F_HIST: [u16; 3] = [1 << 4, 1 << 6, 1 << 8];
const F_BG_HIST: [u16; 3] = [1 << 5, 1 << 7, 1 << 9];
const F_POBS: u16 = 1 << 10;

/// A context prepared for scoring: hashed context features and relations.
#[derive(Debug, Clone)]
pub struct Scoring {
    pub feats: Vec<u32>,
    pub rel: Relations,
}

impl PolicyModel {
    /// A zero-parameter model over `vocab` (which need not be sorted).
    pub fn zero(vocab_tokens: impl IntoIterator<Item = String>, hyper: PolicyHyper) -> Self {
        let mut toks: Vec<String> = vocab_tokens.into_iter().filter(|t| t != UNK).collect();
        toks.sort();
        toks.dedup();
        let mut vocab = vec![UNK.to_string()];
        vocab.extend(toks);
        let v = vocab.len();
        PolicyModel {
            format_version: MODEL_FORMAT_VERSION,
            tokenizer_id: TOKENIZER_ID.to_string(),
            hash_dim: hyper.hash_dim,
            vocab,
            rows: BTreeMap::new(),
            transition: vec![0.0; (v + 1) * v],
            relation: vec![0.0; hyper.hash_dim as usize],
            hyper,
            rel_table: OnceLock::new(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn bos(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, tok: &str) -> u32 {
        match self.vocab[1..].binary_search_by(|t| t.as_str().cmp(tok)) {
            Ok(i) => (i + 1) as u32,
            Err(_) => 0,
        }
    }

    fn ids(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.token_id(t)).collect()
    }

    /// Token ids of an action; an action without tokens scores as one
    /// unknown token.
    pub fn action_ids(&self, action: &str) -> Vec<u32> {
        let ids = self.ids(action);
        if ids.is_empty() {
            vec![0]
        } else {
            ids
        }
    }

    pub fn transition_row(&self, prev: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.transition[prev * v..(prev + 1) * v]
    }

    pub fn prepare_context(&self, ctx: &ContextWindow) -> Scoring {
        let mut rel = Relations {
            uni: vec![0; self.vocab.len()],
            pairs: FnvHashMap::default(),
        };
        let mut mark = |ids: &[u32], uni: u16, pair: u16, with_bos: bool| {
            let mut prev = if with_bos { Some(self.bos()) } else { None };
            for &t in ids {
                if t != 0 {
                    rel.uni[t as usize] |= uni;
                    if let Some(p) = prev {
                        let list = rel.pairs.entry(p).or_default();
                        match list.iter_mut().find(|(v, _)| *v == t) {
                            Some(e) => e.1 |= pair,
                            None => list.push((t, pair)),
                        }
                    }
                }
                prev = Some(t as usize);
            }
        };
        mark(&self.ids(&ctx.instruction), F_INS, F_BG_INS, false);
        mark(&self.ids(&ctx.observation), F_OBS, F_BG_OBS, false);
        if let Some(h) = ctx.history.last() {
            mark(&self.ids(&h.observation), F_POBS, 0, false);
        }
        let n = ctx.history.len();
        for (i, h) in ctx.history.iter().enumerate() {
            let b = match n - i {
                1 => 0,
                2..=5 => 1,
                _ => 2,
            };
            mark(&self.ids(&h.action), F_HIST[b], F_BG_HIST[b], true);
        }
        Scoring {
            feats: context_features(ctx, self.hash_dim),
            rel,
        }
    }

    /// Relation feature ids, per vocabulary entry, after `prev`.
    pub fn relation_ids(&self, rel: &Relations, prev: usize) -> Vec<Vec<u32>> {
        let table = self.rel_table.get_or_init(|| {
            (0..=self.vocab.len())
                .map(|p| {
                    let ptok = if p == self.vocab.len() {
                        "<s>"
                    } else {
                        self.vocab[p].as_str()
                    };
                    let mut ids = [0u32; 2 * REL_FLAGS.len()];
                    for (k, f) in REL_FLAGS.iter().enumerate() {
                        ids[2 * k] = hash_feature(&format!("rel:{f}"), self.hash_dim);
                        ids[2 * k + 1] = hash_feature(&format!("rel:{f}|{ptok}"), self.hash_dim);
                    }
                    ids
                })
                .collect()
        });
        let row = &table[prev];
        let mut masks = rel.uni.clone();
        if let Some(list) = rel.pairs.get(&prev) {
            for &(v, m) in list {
                masks[v as usize] |= m;
            }
        }
        masks
            .iter()
            .map(|&m| {
                let mut ids = Vec::with_capacity(2 * m.count_ones() as usize);
                for k in 0..REL_FLAGS.len() {
                    if m & (1 << k) != 0 {
                        ids.push(row[2 * k]);
                        ids.push(row[2 * k + 1]);
                    }
                }
                ids
            })
            .collect()
    }

    /// Summed context-layer logits for a set of features.
    pub fn context_logits(&self, feats: &[u32]) -> Vec<f64> {
        let mut c = vec![0.0; self.vocab.len()];
        for f in feats {
            if let Some(row) = self.rows.get(f) {
                for (ci, wi) in c.iter_mut().zip(row) {
                    *ci += wi;
                }
            }
        }
        c
    }

    /// Full logits after `prev`, given context logits and relation ids.
    pub fn logits_after(&self, ctx_logits: &[f64], rel_ids: &[Vec<u32>], prev: usize) -> Vec<f64> {
        ctx_logits
            .iter()
            .zip(self.transition_row(prev))
            .zip(rel_ids)
            .map(|((c, t), ids)| {
                c + t + ids.iter().map(|&i| self.relation[i as usize]).sum::<f64>()
            })
            .collect()
    }

    /// Mean token NLL for each candidate.
    pub fn nll_prepared(&self, sc: &Scoring, candidates: &[Vec<u32>]) -> Vec<f64> {
        let c = self.context_logits(&sc.feats);
        let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
        candidates
            .iter()
            .map(|ids| {
                let mut prev = self.bos();
                let mut total = 0.0;
                for &t in ids {
                    let lp = cache.entry(prev).or_insert_with(|| {
                        let rel_ids = self.relation_ids(&sc.rel, prev);
                        let logits = self.logits_after(&c, &rel_ids, prev);
                        let mut out = vec![0.0; logits.len()];
                        log_softmax_into(&logits, &mut out);
                        out
                    });
                    total -= lp[t as usize];
                    prev = t as usize;
                }
                total / ids.len() as f64
            })
            .collect()
    }

    /// Mean per-token NLL of each candidate in context.
    pub fn score_candidates(&self, ctx: &ContextWindow, candidates: &[String]) -> Vec<f64> {
        let sc = self.prepare_context(ctx);
        let ids: Vec<Vec<u32>> = candidates.iter().map(|a| self.action_ids(a)).collect();
        self.nll_prepared(&sc, &ids)
    }

    pub fn all_finite(&self) -> bool {
        self.transition.iter().all(|x| x.is_finite())
            && self.rows.values().all(|r| r.iter().all(|x| x.is_finite()))
            && self.relation.iter().all(|x| x.is_finite())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        if !self.all_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let m: PolicyModel = serde_json::from_str(s)?;
        if m.tokenizer_id != TOKENIZER_ID {
            return Err(ModelError::Tokenizer {
                found: m.tokenizer_id,
                expected: TOKENIZER_ID.to_string(),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Mean per-token negative log-likelihood of `action` in `ctx`.
pub fn action_nll(model: &PolicyModel, ctx: &ContextWindow, action: &str) -> f64 {
    model.score_candidates(ctx, &[action.to_string()])[0]
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("no candidate actions to choose from")]
pub struct EmptyCandidates;

/// Index of the minimum of `scores`; the first one wins ties.
pub fn argmin_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] <= *s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Candidate with minimum mean token NLL; ties go to the earlier candidate.
pub fn select_action(
    model: &PolicyModel,
    ctx: &ContextWindow,
    candidates: &[String],
) -> Result<String, EmptyCandidates> {
    let scores = model.score_candidates(ctx, candidates);
    argmin_first(&scores)
        .map(|i| candidates[i].clone())
        .ok_or(EmptyCandidates)
}

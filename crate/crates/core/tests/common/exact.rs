//! Exact oracle checks: sector binning, feedback render/parse round-trips,
//! oracle labels against brute-force search, gradients against finite
//! differences and run-directory determinism. Each returns a one-line
//! summary, or the first mismatch.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use lfm_core::annotate::{
    oracle_annotate, parse_step_feedback, render_detailed_response, render_feedback_text, Label,
    Privileged, StepFeedback, Window, WindowStep,
};
use lfm_core::env::{EnvFamily, EnvState};
use lfm_core::lfm::{Encoded, FeedbackHyper, FeedbackModel};
use lfm_core::pipeline::{execute, Method, RunConfig};
use lfm_core::policy::train::{loss_and_gradient, prepare, Prepared};
use lfm_core::policy::{rollout_steps, ContextWindow, PolicyHyper, PolicyModel, RandomPolicy};
use lfm_core::verbalize::{sector_of, SectorLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bfs_cost, desc_of, small_layout};

pub type Check = Result<String, String>;

/// Sector index by scanning the eight half-open ranges
/// [45k - 22.5, 45k + 22.5).
fn brute_sector(heading: f64, bearing: f64) -> usize {
    let rel = (bearing - heading).rem_euclid(360.0);
    (0..8)
        .find(|&k| {
            let lo = 45.0 * k as f64 - 22.5;
            (rel - lo).rem_euclid(360.0) < 45.0
        })
        .unwrap()
}

pub fn sector_suite() -> Check {
    // Eight boundaries, probed exactly and just before.
    let mut probes = 0;
    for k in 0..8 {
        let b = 45.0 * k as f64 + 22.5;
        let at = sector_of(0.0, b);
        let before = sector_of(0.0, b - 1e-9);
        let want_at = SectorLabel::ALL[(k + 1) % 8];
        let want_before = SectorLabel::ALL[k];
        if at != want_at || before != want_before {
            return Err(format!(
                "boundary {b}: got {at:?}/{before:?}, want {want_at:?}/{want_before:?}"
            ));
        }
        probes += 2;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(360);
    for i in 0..1000 {
        let h: f64 = rng.gen_range(-720.0..720.0);
        let b: f64 = rng.gen_range(-720.0..720.0);
        let got = sector_of(h, b).index();
        let want = brute_sector(h, b);
        if got != want {
            return Err(format!(
                "fuzz {i}: heading {h} bearing {b}: {got} != {want}"
            ));
        }
    }
    Ok(format!(
        "{probes} boundary probes and 1000 fuzzed angles agree"
    ))
}

const WORDS: [&str; 12] = [
    "takes", "the", "mug", "to", "shelf", "opens", "drawer", "which", "moves", "closer", "apple",
    "it",
];

fn fuzz_window(rng: &mut ChaCha8Rng) -> (Window, Vec<StepFeedback>) {
    let start = rng.gen_range(0..40u32);
    let len = rng.gen_range(1..=20u32);
    let steps: Vec<WindowStep> = (0..len)
        .map(|i| WindowStep {
            number: start + i + 1,
            action: "look".into(),
            result: "Nothing happens.".into(),
        })
        .collect();
    let labels = steps
        .iter()
        .map(|s| {
            let label = Label::from_bool(rng.gen_bool(0.4));
            let explanation = (label == Label::Yes && rng.gen_bool(0.5)).then(|| {
                (0..rng.gen_range(1..7))
                    .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            });
            StepFeedback {
                step: s.number,
                label,
                explanation,
            }
        })
        .collect();
    let window = Window {
        instance_id: "fuzz".into(),
        rollout_id: "fuzz/0".into(),
        instruction: "put a mug in shelf".into(),
        start,
        before: "You are in the middle of a room.".into(),
        steps,
    };
    (window, labels)
}

pub fn round_trip_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for i in 0..10_000 {
        let (window, labels) = fuzz_window(&mut rng);
        let text = if i % 2 == 0 {
            render_feedback_text(&labels)
        } else {
            render_detailed_response(&labels, "The player looks around.", &["opening".into()])
        };
        let parsed = parse_step_feedback(&text, &window).map_err(|e| format!("{i}: {e}"))?;
        if parsed.labels != labels || parsed.dropped != 0 {
            return Err(format!("set {i} did not round-trip:\n{text}"));
        }
    }
    Ok("10000 fuzzed label sets round-trip".into())
}

pub fn oracle_bfs_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut windows = 0;
    let mut steps = 0;
    while windows < 100 {
        let desc = desc_of(small_layout(&mut rng));
        let traj = rollout_steps(&RandomPolicy, &desc, rng.gen(), "bfs", Some(30))
            .map_err(|e| e.to_string())?;
        if traj.is_empty() {
            continue;
        }
        let start = rng.gen_range(0..traj.len());
        let window = Window::from_trajectory(&traj, start, rng.gen_range(1..=20));
        let privileged = Privileged::from_trajectory(&traj, &window);
        let got = oracle_annotate(&window, &privileged, false).map_err(|e| e.to_string())?;
        // Keys are only unique within one layout.
        let mut memo: HashMap<String, Option<u32>> = HashMap::new();
        let mut cost = |s: &EnvState| -> Option<u32> {
            *memo
                .entry(s.planning_key())
                .or_insert_with(|| bfs_cost(s, 24))
        };
        for (k, fb) in got.iter().enumerate() {
            let before = cost(&privileged.states[k]).ok_or("state beyond search depth")?;
            let after = cost(&privileged.states[k + 1]).ok_or("state beyond search depth")?;
            let want = Label::from_bool(after < before);
            if fb.label != want {
                return Err(format!(
                    "window {windows} step {} `{}`: oracle {:?}, search {before}->{after}",
                    fb.step, window.steps[k].action, fb.label
                ));
            }
            steps += 1;
        }
        windows += 1;
    }
    Ok(format!(
        "100 windows ({steps} steps) match breadth-first search"
    ))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn toy_policy_set() -> (PolicyModel, Vec<Prepared>) {
    let hyper = PolicyHyper {
        hash_dim: 1 << 10,
        ..PolicyHyper::default()
    };
    let cands: Vec<String> = [
        "go to shelf 1",
        "go to drawer 2",
        "take mug 1 from shelf 1",
        "open drawer 2",
        "look",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let vocab = cands
        .iter()
        .flat_map(|c| lfm_core::tokenize::tokenize(c))
        .collect::<Vec<_>>();
    let mut model = PolicyModel::zero(vocab, hyper);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ctxs = Vec::new();
    for (i, obs) in [
        "You arrive at shelf 1. On the shelf 1, you see a mug 1.",
        "You are in the middle of a room.",
        "The drawer 2 is closed.",
    ]
    .iter()
    .enumerate()
    {
        let mut ctx = ContextWindow::new("put a mug in drawer", "You are in the middle of a room.");
        if i > 0 {
            ctx.advance("go to shelf 1", "You arrive at shelf 1.");
        }
        ctx.advance("look", *obs);
        ctxs.push(ctx);
    }
    let prepared: Vec<Prepared> = ctxs
        .iter()
        .enumerate()
        .map(|(i, c)| prepare(&model, c, &cands, (2 * i) % cands.len()))
        .collect();
    let v = model.vocab_size();
    for p in &prepared {
        for &f in &p.scoring.feats {
            model
                .rows
                .insert(f, (0..v).map(|_| rng.gen_range(-0.5..0.5)).collect());
        }
    }
    for t in model.transition.iter_mut() {
        *t = rng.gen_range(-0.5..0.5);
    }
    for r in model.relation.iter_mut() {
        *r = rng.gen_range(-0.5..0.5);
    }
    (model, prepared)
}

fn policy_gradient_check() -> Result<usize, String> {
    let (mut model, data) = toy_policy_set();
    let (_, g) = loss_and_gradient(&model, &data);
    let h = 1e-5;
    let mut checked = 0;
    let fd = |model: &mut PolicyModel, set: &dyn Fn(&mut PolicyModel, f64)| {
        set(model, h);
        let up = loss_and_gradient(model, &data).0;
        set(model, -2.0 * h);
        let down = loss_and_gradient(model, &data).0;
        set(model, h);
        (up - down) / (2.0 * h)
    };
    for (&f, row) in &g.rows {
        for (k, &gk) in row.iter().enumerate() {
            let num = fd(&mut model, &|m, d| m.rows.get_mut(&f).unwrap()[k] += d);
            if rel_err(gk, num) > 1e-4 {
                return Err(format!("context row {f}[{k}]: {gk} vs {num}"));
            }
            checked += 1;
        }
    }
    let v = model.vocab_size();
    for (&p, row) in &g.transition {
        for (k, &gk) in row.iter().enumerate() {
            let num = fd(&mut model, &|m, d| m.transition[p * v + k] += d);
            if rel_err(gk, num) > 1e-4 {
                return Err(format!("transition {p},{k}: {gk} vs {num}"));
            }
            checked += 1;
        }
    }
    let rel: BTreeMap<u32, f64> = g.relation.iter().map(|(k, v)| (*k, *v)).collect();
    for (&id, &gk) in &rel {
        let num = fd(&mut model, &|m, d| m.relation[id as usize] += d);
        if rel_err(gk, num) > 1e-4 {
            return Err(format!("relation {id}: {gk} vs {num}"));
        }
        checked += 1;
    }
    Ok(checked)
}

fn feedback_gradient_check() -> Result<usize, String> {
    let hyper = FeedbackHyper {
        hash_dim: 64,
        ..FeedbackHyper::default()
    };
    let mut model = FeedbackModel::zero(&hyper, false);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for w in model.weights.iter_mut() {
        *w = rng.gen_range(-0.5..0.5);
    }
    model.bias = 0.3;
    let data: Vec<Encoded> = (0..12)
        .map(|_| {
            let mut feats: Vec<u32> = (0..6).map(|_| rng.gen_range(0..64)).collect();
            feats.sort_unstable();
            feats.dedup();
            Encoded {
                feats,
                yes: rng.gen_bool(0.5),
            }
        })
        .collect();
    let (_, g) = model.loss_and_gradient(&data);
    let h = 1e-5;
    let mut checked = 0;
    for (&f, &gk) in &g.weights {
        model.weights[f as usize] += h;
        let up = model.mean_loss(&data);
        model.weights[f as usize] -= 2.0 * h;
        let down = model.mean_loss(&data);
        model.weights[f as usize] += h;
        let num = (up - down) / (2.0 * h);
        if rel_err(gk, num) > 1e-4 {
            return Err(format!("feedback weight {f}: {gk} vs {num}"));
        }
        checked += 1;
    }
    model.bias += h;
    let up = model.mean_loss(&data);
    model.bias -= 2.0 * h;
    let down = model.mean_loss(&data);
    model.bias += h;
    let num = (up - down) / (2.0 * h);
    if rel_err(g.bias, num) > 1e-4 {
        return Err(format!("feedback bias: {} vs {num}", g.bias));
    }
    Ok(checked + 1)
}

pub fn gradient_suite() -> Check {
    let p = policy_gradient_check()?;
    let f = feedback_gradient_check()?;
    Ok(format!(
        "{p} policy and {f} feedback-model partials within 1e-4 relative"
    ))
}

/// A run small enough for tests.
pub fn tiny_config(method: Method, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(method, EnvFamily::House, seed);
    cfg.env.count = 24;
    cfg.budget.tokens = 3_000;
    cfg.budget.window_count = 60;
    cfg.policy.steps = 300;
    cfg.policy.eval_every = 100;
    cfg.collect.rollouts = 2;
    cfg.collect.annotation_rollouts = 2;
    cfg
}

fn dir_contents(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        out.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&p).unwrap(),
        );
    }
    out
}

pub fn determinism_suite() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = tiny_config(Method::Lfm, 3);
    cfg.workers = 2;
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    execute(&cfg, Some(&a)).map_err(|e| e.to_string())?;
    execute(&cfg, Some(&b)).map_err(|e| e.to_string())?;
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    let names_a: Vec<&String> = ca.keys().collect();
    let names_b: Vec<&String> = cb.keys().collect();
    if names_a != names_b {
        return Err(format!("file sets differ: {names_a:?} vs {names_b:?}"));
    }
    for (name, bytes) in &ca {
        if cb[name] != *bytes {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!("{} files identical across two runs", ca.len()))
}

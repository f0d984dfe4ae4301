mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use lfm_core::annotate::remote::{EndpointConfig, RemoteClient, Transport, TransportError};
use lfm_core::annotate::{
    noisy_annotate, oracle_annotate, parse_step_feedback, AnnotateError, Label, Privileged,
    TokenLedger, Window, WindowStep,
};
use lfm_core::tokenize::count_tokens;
use proptest::prelude::*;
use serde_json::{json, Value};

use common::random_trajectories;

#[derive(Debug, Clone)]
enum Op {
    Charge(u64),
    Reserve(u64, Option<u64>),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u64..40).prop_map(Op::Charge),
        (0u64..40, proptest::option::of(0u64..60)).prop_map(|(m, a)| Op::Reserve(m, a)),
    ]
}

proptest! {
    #[test]
    fn ledger_never_overspends(budget in 0u64..200, ops in proptest::collection::vec(op(), 0..60)) {
        let mut l = TokenLedger::new("m", budget);
        let mut charged = 0u64;
        for o in ops {
            match o {
                Op::Charge(n) => {
                    let before = l.used;
                    if l.charge(n).is_ok() {
                        charged += n;
                    } else {
                        prop_assert_eq!(l.used, before);
                    }
                }
                Op::Reserve(max, actual) => {
                    if l.reserve(max).is_ok() {
                        l.settle(max, actual);
                        charged += actual.map_or(0, |a| a.min(max));
                    }
                }
            }
            prop_assert!(l.used <= budget);
            prop_assert_eq!(l.used, charged);
            prop_assert_eq!(l.remaining(), budget - l.used);
        }
    }
}

/// Replays scripted replies and counts requests.
struct Script {
    replies: Mutex<Vec<Result<String, TransportError>>>,
    calls: Arc<AtomicUsize>,
}

impl Transport for Script {
    fn post(&self, _cfg: &EndpointConfig, body: &Value) -> Result<Value, TransportError> {
        assert_eq!(body["messages"][0]["role"], "user");
        self.calls.fetch_add(1, Ordering::SeqCst);
        let next = self.replies.lock().unwrap().remove(0);
        next.map(|text| json!({"choices": [{"message": {"content": text}}]}))
    }
}

fn endpoint(cache: Option<std::path::PathBuf>, max_tokens: u32) -> EndpointConfig {
    EndpointConfig {
        id: "fixture".into(),
        url: "http://unused.invalid/v1/chat/completions".into(),
        model: "m".into(),
        api_key: None,
        max_tokens,
        timeout_secs: 1,
        max_attempts: 3,
        backoff_ms: 0,
        max_inflight: 2,
        cache_path: cache,
    }
}

fn client(
    cfg: EndpointConfig,
    replies: Vec<Result<String, TransportError>>,
) -> (RemoteClient, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let t = Script {
        replies: Mutex::new(replies),
        calls: calls.clone(),
    };
    (
        RemoteClient::with_transport(cfg, Box::new(t)).unwrap(),
        calls,
    )
}

#[test]
fn cached_prompts_are_free() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let ledger = Mutex::new(TokenLedger::new("lfm", 1000));
    let (c, calls) = client(
        endpoint(Some(path.clone()), 64),
        vec![Ok("Yes\n- Step 1".into())],
    );
    assert_eq!(c.complete("p", &ledger).unwrap(), "Yes\n- Step 1");
    let used = ledger.lock().unwrap().used;
    assert_eq!(used, count_tokens("Yes\n- Step 1") as u64);
    assert_eq!(c.complete("p", &ledger).unwrap(), "Yes\n- Step 1");
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    let l = ledger.lock().unwrap().clone();
    assert_eq!((l.used, l.calls, l.cached), (used, 1, 1));

    // A fresh client reads the persisted cache.
    let (c2, calls2) = client(endpoint(Some(path), 64), vec![]);
    let ledger2 = Mutex::new(TokenLedger::new("lfm", 0));
    assert_eq!(c2.complete("p", &ledger2).unwrap(), "Yes\n- Step 1");
    assert_eq!(calls2.load(Ordering::SeqCst), 0);
    assert_eq!(ledger2.lock().unwrap().used, 0);
}

#[test]
fn transient_failures_are_retried() {
    let ledger = Mutex::new(TokenLedger::new("lfm", 1000));
    let (c, calls) = client(
        endpoint(None, 64),
        vec![
            Err(TransportError::Transient("503".into())),
            Err(TransportError::Transient("429".into())),
            Ok("No".into()),
        ],
    );
    assert_eq!(c.complete("p", &ledger).unwrap(), "No");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
    assert_eq!(ledger.lock().unwrap().used, 1);
}

#[test]
fn failures_release_the_reservation() {
    let ledger = Mutex::new(TokenLedger::new("lfm", 100));
    let (c, calls) = client(
        endpoint(None, 64),
        vec![Err(TransportError::Permanent("401".into()))],
    );
    assert!(matches!(
        c.complete("p", &ledger),
        Err(AnnotateError::Endpoint(_))
    ));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    let (c, _) = client(
        endpoint(None, 64),
        vec![Err(TransportError::Transient("x".into())); 3],
    );
    let err = c.complete("p", &ledger).unwrap_err();
    assert!(err.to_string().contains("3 attempts"), "{err}");
    let l = ledger.lock().unwrap();
    assert_eq!((l.used, l.remaining()), (0, 100));
}

#[test]
fn requests_need_max_tokens_of_headroom() {
    let ledger = Mutex::new(TokenLedger::new("lfm", 63));
    let (c, calls) = client(endpoint(None, 64), vec![Ok("No".into())]);
    assert!(matches!(
        c.complete("p", &ledger),
        Err(AnnotateError::Budget(_))
    ));
    assert_eq!(calls.load(Ordering::SeqCst), 0);
}

#[test]
fn long_responses_are_truncated_and_charged_at_most_max_tokens() {
    let ledger = Mutex::new(TokenLedger::new("lfm", 1000));
    let long = "word ".repeat(50);
    let (c, _) = client(endpoint(None, 8), vec![Ok(long)]);
    let text = c.complete("p", &ledger).unwrap();
    assert_eq!(count_tokens(&text), 8);
    assert_eq!(ledger.lock().unwrap().used, 8);
}

#[test]
fn corrupt_cache_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    std::fs::write(&path, "{not json}\n").unwrap();
    let calls = Arc::new(AtomicUsize::new(0));
    let t = Script {
        replies: Mutex::new(vec![]),
        calls,
    };
    let err = RemoteClient::with_transport(endpoint(Some(path), 8), Box::new(t))
        .err()
        .unwrap();
    assert!(err.to_string().contains("cache.jsonl"), "{err}");
}

#[test]
fn noisy_flip_rates_match_the_configuration() {
    let trajs = random_trajectories(40, 7);
    let (mut no, mut flipped, mut yes, mut dropped) = (0usize, 0usize, 0usize, 0usize);
    for (i, t) in trajs.iter().enumerate() {
        let w = Window::from_trajectory(t, 0, 20);
        let p = Privileged::from_trajectory(t, &w);
        let clean = oracle_annotate(&w, &p, false).unwrap();
        let noisy = noisy_annotate(&w, &p, 0.3, 0.1, i as u64, false).unwrap();
        for (c, n) in clean.iter().zip(&noisy) {
            match c.label {
                Label::No => {
                    no += 1;
                    flipped += n.label.is_yes() as usize;
                }
                Label::Yes => {
                    yes += 1;
                    dropped += (!n.label.is_yes()) as usize;
                }
            }
        }
    }
    // Four binomial standard deviations.
    let within = |k: usize, n: usize, p: f64| {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        (k as f64 - n as f64 * p).abs() <= 4.0 * sd
    };
    assert!(no > 300 && yes > 30, "{no} no, {yes} yes");
    assert!(within(flipped, no, 0.3), "{flipped}/{no}");
    assert!(within(dropped, yes, 0.1), "{dropped}/{yes}");
}

#[test]
fn noisy_labels_do_not_depend_on_the_window() {
    let t = &random_trajectories(1, 3)[0];
    let a = Window::from_trajectory(t, 0, 12);
    let b = Window::from_trajectory(t, 6, 12);
    let la = noisy_annotate(&a, &Privileged::from_trajectory(t, &a), 0.5, 0.5, 9, false).unwrap();
    let lb = noisy_annotate(&b, &Privileged::from_trajectory(t, &b), 0.5, 0.5, 9, false).unwrap();
    for x in &la {
        if let Some(y) = lb.iter().find(|y| y.step == x.step) {
            assert_eq!(x.label, y.label, "step {}", x.step);
        }
    }
    assert!(noisy_annotate(&a, &Privileged::from_trajectory(t, &a), 1.5, 0.0, 9, false).is_err());
}

fn window(first: u32, len: u32) -> Window {
    Window {
        instance_id: "i".into(),
        rollout_id: "r".into(),
        instruction: "put a mug in shelf".into(),
        start: first - 1,
        before: "You are in the middle of a room.".into(),
        steps: (first..first + len)
            .map(|n| WindowStep {
                number: n,
                action: format!("look {n}"),
                result: "Nothing happens.".into(),
            })
            .collect(),
    }
}

#[test]
fn feedback_parsing_edge_cases() {
    let w = window(5, 4);
    let p = parse_step_feedback("No.", &w).unwrap();
    assert!(p.labels.iter().all(|l| l.label == Label::No));
    assert_eq!(p.labels.len(), 4);

    let p = parse_step_feedback(
        "Yes\n- Step 6: picks up\n  the mug\n- Step 6\n- Step 40\n* step 8",
        &w,
    )
    .unwrap();
    let yes: Vec<u32> = p
        .labels
        .iter()
        .filter(|l| l.label.is_yes())
        .map(|l| l.step)
        .collect();
    assert_eq!(yes, vec![6, 8]);
    assert_eq!(p.dropped, 2);
    assert_eq!(p.labels[1].explanation.as_deref(), Some("picks up the mug"));

    assert!(matches!(
        parse_step_feedback("Maybe", &w),
        Err(AnnotateError::Parse(_))
    ));
}

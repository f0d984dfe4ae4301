mod common;

use std::collections::BTreeSet;
use std::sync::Mutex;

use lfm_core::annotate::{Annotator, AnnotatorSpec, Label, TokenLedger};
use lfm_core::env::TaskFamily;
use lfm_core::lfm::{
    balance_and_split, build_feedback_dataset, desirable, eval_f1, train_feedback_model, F1Score,
    FeedbackExample, FeedbackHyper, FeedbackModel,
};
use lfm_core::policy::ContextWindow;
use proptest::prelude::*;

use common::random_trajectories;

proptest! {
    #[test]
    fn f1_matches_the_count_formula(pairs in proptest::collection::vec(any::<(bool, bool)>(), 0..200)) {
        let s = F1Score::from_pairs(pairs.iter().copied());
        let tp = pairs.iter().filter(|p| p.0 && p.1).count();
        let fp = pairs.iter().filter(|p| p.0 && !p.1).count();
        let fn_ = pairs.iter().filter(|p| !p.0 && p.1).count();
        prop_assert_eq!((s.tp, s.fp, s.fn_, s.tn), (tp, fp, fn_, pairs.len() - tp - fp - fn_));
        // 2tp / (2tp + fp + fn), zero when there are no true positives.
        let want = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        prop_assert!((s.f1 - want).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&s.precision) && (0.0..=1.0).contains(&s.recall));
    }

    #[test]
    fn balancing_keeps_equal_classes(yes in 1usize..60, no in 1usize..60, seed in any::<u64>()) {
        let data: Vec<FeedbackExample> = (0..yes + no).map(|i| example(i, i < yes)).collect();
        let (train, val) = balance_and_split(&data, seed).unwrap();
        let n = yes.min(no);
        prop_assert_eq!(train.len() + val.len(), 2 * n);
        prop_assert_eq!(train.len(), 2 * n * 4 / 5);
        let all: Vec<&FeedbackExample> = train.iter().chain(&val).collect();
        prop_assert_eq!(all.iter().filter(|e| e.label.is_yes()).count(), n);
        let steps: BTreeSet<u32> = all.iter().map(|e| e.step).collect();
        prop_assert_eq!(steps.len(), 2 * n);
        prop_assert_eq!(balance_and_split(&data, seed).unwrap(), (train, val));
    }
}

fn example(i: usize, yes: bool) -> FeedbackExample {
    let (action, result) = if yes {
        (format!("take mug {i} from shelf 1"), "You pick up the mug.")
    } else {
        (format!("look {i}"), "Nothing happens.")
    };
    FeedbackExample {
        instance_id: "inst".into(),
        rollout_id: "r".into(),
        step: i as u32 + 1,
        family: TaskFamily::Put,
        context: ContextWindow::new("put a mug in shelf", "You are in the room."),
        action,
        result: result.into(),
        label: Label::from_bool(yes),
        explanation: None,
    }
}

#[test]
fn one_sided_feedback_cannot_be_balanced() {
    let data: Vec<FeedbackExample> = (0..5).map(|i| example(i, true)).collect();
    assert!(balance_and_split(&data, 0).is_err());
}

#[test]
fn ties_are_not_desirable() {
    let hyper = FeedbackHyper {
        hash_dim: 64,
        ..FeedbackHyper::default()
    };
    let mut m = FeedbackModel::zero(&hyper, false);
    let ctx = ContextWindow::new("put a mug in shelf", "o");
    assert!(!desirable(&m, &ctx, "look", "Nothing happens."));
    m.bias = 1e-9;
    assert!(desirable(&m, &ctx, "look", "Nothing happens."));
}

#[test]
fn separable_feedback_is_learned() {
    let data: Vec<FeedbackExample> = (0..200).map(|i| example(i, i % 2 == 0)).collect();
    let (train, val) = balance_and_split(&data, 1).unwrap();
    let hyper = FeedbackHyper {
        hash_dim: 1 << 12,
        ..FeedbackHyper::default()
    };
    let m = train_feedback_model(&train, &val, &hyper, false, 1).unwrap();
    assert_eq!(eval_f1(&m, &val).unwrap().f1, 1.0);
    let back = FeedbackModel::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn corrupted_models_are_rejected() {
    let m = FeedbackModel::zero(
        &FeedbackHyper {
            hash_dim: 8,
            ..FeedbackHyper::default()
        },
        false,
    );
    let json = m.to_json();
    let other = json.replace(&m.tokenizer_id, "other-tokenizer");
    assert!(FeedbackModel::from_json(&other).is_err());
    assert!(FeedbackModel::from_json("{").is_err());
}

#[test]
fn dataset_respects_window_count_and_budget() {
    let trajs = random_trajectories(6, 11);
    let ann = Annotator::new(&AnnotatorSpec::Oracle { detailed: false }, 0).unwrap();
    let ledger = Mutex::new(TokenLedger::new("lfm", 1_000_000));
    let ds = build_feedback_dataset(&trajs, &ann, "oracle", 10, 15, &ledger, 3).unwrap();
    assert_eq!(ds.windows.len(), 15);
    assert!(!ds.exhausted);
    let keys: BTreeSet<(String, u32)> = ds
        .examples
        .iter()
        .map(|e| (e.rollout_id.clone(), e.step))
        .collect();
    assert_eq!(keys.len(), ds.examples.len(), "examples are deduplicated");
    assert_eq!(ds.ledger.used, ledger.lock().unwrap().used);

    let small = Mutex::new(TokenLedger::new("lfm", 40));
    let ds = build_feedback_dataset(&trajs, &ann, "oracle", 10, 1000, &small, 3).unwrap();
    assert!(ds.exhausted);
    assert!(ds.ledger.used <= 40);
}

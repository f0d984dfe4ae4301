mod common;

use lfm_core::env::{remaining_cost, EnvFamily};
use lfm_core::evalkit::summarize_runs;
use lfm_core::lfm::{FeedbackHyper, FeedbackModel};
use lfm_core::pipeline::{
    adapt, collect_with, execute, AdaptConfig, LedgerReport, Method, PipelineError, Pools,
    RoundReport, RunConfig, RunReport,
};
use lfm_core::policy::Trajectory;

use common::exact::tiny_config;
use common::random_trajectories;

fn quick(method: Method, seed: u64) -> RunConfig {
    let mut cfg = tiny_config(method, seed);
    cfg.eval.train = false;
    cfg
}

#[test]
fn judges_select_exactly_the_accepted_steps() {
    let trajs = random_trajectories(5, 21);
    let total: usize = trajs.iter().map(|t| t.len()).sum();
    let (all, s) = collect_with(&trajs, 2, &|_, _| true);
    assert_eq!(
        (all.len(), s.kept, s.steps, s.rollouts),
        (total, total, total, 5)
    );
    assert!(all.iter().all(|e| e.round == 2));
    let (none, s) = collect_with(&trajs, 2, &|_, _| false);
    assert!(none.is_empty() && s.kept == 0);

    let progress = |t: &Trajectory, i: usize| {
        remaining_cost(t.state_after(i), &t.instruction).unwrap()
            < remaining_cost(&t.steps[i].state, &t.instruction).unwrap()
    };
    let (kept, _) = collect_with(&trajs, 1, &progress);
    let want: Vec<(String, u32)> = trajs
        .iter()
        .flat_map(|t| {
            (0..t.len())
                .filter(move |&i| progress(t, i))
                .map(move |i| (t.rollout_id.clone(), i as u32))
        })
        .collect();
    let got: Vec<(String, u32)> = kept
        .iter()
        .map(|e| (e.rollout_id.clone(), e.step))
        .collect();
    assert_eq!(got, want);
    for e in &kept {
        let t = trajs.iter().find(|t| t.rollout_id == e.rollout_id).unwrap();
        assert_eq!(e.action, t.steps[e.step as usize].action);
    }
}

#[test]
fn lfm_run_stays_within_budget_and_adapts_for_free() {
    let cfg = quick(Method::Lfm, 5);
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("lfm");
    let a = execute(&cfg, Some(&run)).unwrap();
    let rep = &a.report;
    assert!(rep.ledger.used <= cfg.budget.tokens);
    let fb = rep.feedback.as_ref().unwrap();
    assert!(fb.windows > 0 && fb.yes + fb.no == fb.examples);
    assert_eq!(rep.rounds.len(), 2);
    assert_eq!(a.policies.len(), 2);

    let text = std::fs::read_to_string(run.join("report.json")).unwrap();
    let back: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, rep);

    // A feedback model that rejects everything leaves the policy alone.
    let mut never = FeedbackModel::zero(
        &FeedbackHyper {
            hash_dim: cfg.feedback.hash_dim,
            ..FeedbackHyper::default()
        },
        false,
    );
    never.bias = -10.0;
    let last = a.policies.last().unwrap();
    let (p, da, r) = adapt(last, &never, &a.datasets, &a.pools, &cfg).unwrap();
    assert!(da.is_empty());
    assert_eq!(&p, last);
    assert_eq!(r.tokens_used, 0);
    assert_eq!(r.pre_test_completion, r.post_test_completion);

    let overlapping = Pools {
        train: a.pools.train.clone(),
        test: a.pools.train.clone(),
    };
    assert!(matches!(
        adapt(last, &never, &a.datasets, &overlapping, &cfg),
        Err(PipelineError::Precondition(_))
    ));

    let mut ad = quick(Method::LfmAdapt, 5);
    ad.adapt = Some(AdaptConfig { from_run: run });
    let b = execute(&ad, None).unwrap();
    let rep = b.report.adaptation.unwrap();
    assert_eq!((rep.tokens_used, b.report.ledger.used), (0, 0));
    assert!((rep.pre_test_completion - a.report.final_test_completion()).abs() < 1e-12);
}

#[test]
fn adaptation_needs_a_feedback_model() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("bc");
    execute(&quick(Method::Bc, 1), Some(&run)).unwrap();
    let mut ad = quick(Method::LfmAdapt, 1);
    ad.adapt = Some(AdaptConfig { from_run: run });
    let err = execute(&ad, None).unwrap_err();
    assert!(matches!(err, PipelineError::Precondition(_)), "{err}");
}

#[test]
fn baselines_spend_their_budget() {
    for m in [Method::Actpred, Method::Dagger] {
        let mut cfg = quick(m, 2);
        cfg.budget.tokens = 400;
        let a = execute(&cfg, None).unwrap();
        let l = &a.report.ledger;
        assert!(l.used <= 400, "{m}: {l:?}");
        assert!(
            l.used > 300,
            "{m} should nearly exhaust a small budget: {l:?}"
        );
        match m {
            Method::Actpred => assert!(a.report.actpred.unwrap().budget_exhausted),
            _ => assert!(a.report.dagger.unwrap().budget_exhausted),
        }
    }
}

#[test]
fn budgets_that_buy_nothing_are_reported() {
    for m in [Method::Lfm, Method::Dagger, Method::Actpred] {
        let mut cfg = quick(m, 0);
        cfg.budget.tokens = 1;
        let err = execute(&cfg, None).unwrap_err();
        assert!(
            matches!(err, PipelineError::BudgetExhausted(_)),
            "{m}: {err}"
        );
    }
}

fn report(method: Method, seed: u64, test: f64) -> RunReport {
    RunReport {
        method,
        family: EnvFamily::House,
        seed,
        train_instances: 1,
        test_instances: 1,
        demos: 1,
        rounds: vec![RoundReport {
            round: 0,
            train_completion: None,
            test_completion: test,
            new_examples: 0,
            dataset_size: 0,
        }],
        ledger: LedgerReport {
            budget: 0,
            used: 0,
            calls: 0,
            cached: 0,
        },
        feedback: None,
        actpred: None,
        dagger: None,
        adaptation: None,
    }
}

#[test]
fn summaries_count_strict_per_seed_wins() {
    let reports = vec![
        report(Method::Bc, 0, 0.2),
        report(Method::Bc, 1, 0.4),
        report(Method::Bc, 2, 0.5),
        report(Method::Lfm, 0, 0.3),
        report(Method::Lfm, 1, 0.4),
        report(Method::Lfm, 3, 0.9),
    ];
    let s = summarize_runs(&reports).unwrap();
    let rows: Vec<(&str, usize)> = s.rows.iter().map(|r| (r.method.as_str(), r.runs)).collect();
    assert_eq!(rows, vec![("bc", 3), ("lfm", 3)]);
    assert!((s.rows[0].mean - 1.1 / 3.0).abs() < 1e-12);
    let w = s.wins.iter().find(|w| w.method == "lfm").unwrap();
    assert_eq!((w.wins, w.seeds), (1, 2));
    let w = s.wins.iter().find(|w| w.method == "bc").unwrap();
    assert_eq!((w.wins, w.seeds), (0, 2));
    assert!(s.to_text().contains("lfm beats bc: 1/2"));
    assert!(summarize_runs(&[]).is_err());
}

#[test]
fn configs_reject_bad_values() {
    let base = "method = \"lfm\"\n[env]\nfamily = \"house-v0\"\n";
    for extra in [
        "[budget]\nwindow_len = 0\n",
        "[budget]\nwindow_len = 21\n",
        "[collect]\ntemperature = 0.0\n",
        "[collect]\nannotation_rollouts = 0\n",
        "[annotator]\nkind = \"psychic\"\n",
    ] {
        assert!(
            RunConfig::from_toml_str(&format!("{base}{extra}")).is_err(),
            "{extra}"
        );
    }
    assert!(RunConfig::from_toml_str("method = \"lfm\"\n[env]\nfamily = \"castle\"\n").is_err());
    let noisy = format!(
        "{base}[annotator]\nkind = \"noisy\"\nfp_rate = 0.5\n[collect]\ntemperature = 0.7\n"
    );
    let c = RunConfig::from_toml_str(&noisy).unwrap();
    assert_eq!(c.collect.temperature, Some(0.7));
    assert!(c.annotator.id().contains("fp=0.5"));
}

use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{
    ActPredReport, AdaptReport, DaggerReport, FeedbackReport, LedgerReport, RoundReport, RunReport,
};
use super::{write_jsonl, CollectConfig, Method, PipelineError, RunConfig, RunDir};
use crate::annotate::{AnnotateError, Annotator, Privileged, TokenLedger, Window};
use crate::env::{gen_instances_with, EnvError, InstanceDescriptor, Split};
use crate::evalkit::task_completion;
use crate::lfm::{
    balance_and_split, build_feedback_dataset, desirable, eval_f1, sample_windows,
    train_feedback_model, FeedbackDataset, FeedbackModel,
};
use crate::policy::{
    dedup_union, rollout, train_policy, ExpertPolicy, ImitationExample, ModelPolicy, PolicyModel,
    Trajectory,
};
use crate::seeding;

/// Train and test instance pools of a run.
#[derive(Debug, Clone)]
pub struct Pools {
    pub train: Vec<InstanceDescriptor>,
    pub test: Vec<InstanceDescriptor>,
}

impl Pools {
    pub fn generate(cfg: &RunConfig) -> Result<Pools, PipelineError> {
        let all = gen_instances_with(&cfg.env.gen_config(cfg.seed))?;
        let (train, test) = all.into_iter().partition(|d| d.split == Split::Train);
        Ok(Pools { train, test })
    }
}

/// Everything a run produced, kept in memory for callers that chain runs.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub report: RunReport,
    pub pools: Pools,
    /// Policy of every round, starting with behavioural cloning.
    pub policies: Vec<PolicyModel>,
    /// D_0 (demonstrations) followed by the data of every round.
    pub datasets: Vec<Vec<ImitationExample>>,
    pub feedback: Option<FeedbackDataset>,
    pub fmodel: Option<FeedbackModel>,
    pub ledger: TokenLedger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollectStats {
    pub rollouts: usize,
    pub steps: usize,
    pub kept: usize,
}

/// Replayable record of one expert demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub instance_id: String,
    pub instruction: String,
    pub actions: Vec<String>,
    pub success: bool,
}

impl From<&Trajectory> for DemoRecord {
    fn from(t: &Trajectory) -> Self {
        DemoRecord {
            instance_id: t.instance_id.clone(),
            instruction: t.instruction.text.clone(),
            actions: t.steps.iter().map(|s| s.action.clone()).collect(),
            success: t.success,
        }
    }
}

/// One expert rollout per train instance.
pub fn expert_trajectories(
    train: &[InstanceDescriptor],
    seed: u64,
) -> Result<Vec<Trajectory>, PipelineError> {
    Ok(train
        .par_iter()
        .map(|d| rollout(&ExpertPolicy, d, seed, &format!("{}/demo", d.id)))
        .collect::<Result<Vec<_>, EnvError>>()?)
}

/// D_0: every step of the expert trajectories.
pub fn demonstrations(trajs: &[Trajectory]) -> Vec<ImitationExample> {
    trajs
        .iter()
        .flat_map(|t| (0..t.len()).map(move |i| t.imitation_example(i, 0)))
        .collect()
}

pub fn train_bc(demos: &[ImitationExample], cfg: &RunConfig) -> Result<PolicyModel, PipelineError> {
    Ok(train_policy(
        demos,
        &cfg.policy,
        seeding::derive(cfg.seed, "policy", 0),
    )?)
}

/// One rollout of `policy` per (instance, repetition), in instance order.
pub fn collect_rollouts(
    policy: &PolicyModel,
    instances: &[InstanceDescriptor],
    seed: u64,
    tag: &str,
    collect: &CollectConfig,
) -> Result<Vec<Trajectory>, PipelineError> {
    let p = ModelPolicy {
        model: policy,
        temperature: collect.temperature,
    };
    let jobs: Vec<(usize, &InstanceDescriptor)> = instances
        .iter()
        .flat_map(|d| (0..collect.rollouts.max(1)).map(move |j| (j, d)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|(j, d)| rollout(&p, d, seed, &format!("{}/{tag}-{j}", d.id)))
        .collect::<Result<Vec<_>, EnvError>>()?)
}

/// Keep the rollout steps accepted by `judge`, as round-`round` examples.
pub fn collect_with(
    trajs: &[Trajectory],
    round: u32,
    judge: &(dyn Fn(&Trajectory, usize) -> bool + Sync),
) -> (Vec<ImitationExample>, CollectStats) {
    let per: Vec<Vec<ImitationExample>> = trajs
        .par_iter()
        .map(|t| {
            (0..t.len())
                .filter(|&i| judge(t, i))
                .map(|i| t.imitation_example(i, round))
                .collect()
        })
        .collect();
    let stats = CollectStats {
        rollouts: trajs.len(),
        steps: trajs.iter().map(|t| t.len()).sum(),
        kept: per.iter().map(|v| v.len()).sum(),
    };
    (per.into_iter().flatten().collect(), stats)
}

/// Roll out `policy` on `instances` and keep the steps the feedback model
/// judges desirable.
pub fn collect_desirable(
    policy: &PolicyModel,
    instances: &[InstanceDescriptor],
    fmodel: &FeedbackModel,
    round: u32,
    seed: u64,
    collect: &CollectConfig,
) -> Result<(Vec<ImitationExample>, CollectStats), PipelineError> {
    let trajs = collect_rollouts(policy, instances, seed, &format!("r{round}"), collect)?;
    let judge = |t: &Trajectory, i: usize| {
        desirable(
            fmodel,
            &t.context_at(i),
            &t.steps[i].action,
            &t.steps[i].result,
        )
    };
    Ok(collect_with(&trajs, round, &judge))
}

/// Retrain from scratch on the deduplicated union of `datasets`; returns
/// the policy and the union size.
pub fn improve_round(
    datasets: &[Vec<ImitationExample>],
    cfg: &RunConfig,
    round: u32,
) -> Result<(PolicyModel, usize), PipelineError> {
    let union = dedup_union(datasets.iter().map(|d| d.as_slice()));
    let model = train_policy(
        &union,
        &cfg.policy,
        seeding::derive(cfg.seed, "policy", round as u64),
    )?;
    Ok((model, union.len()))
}

fn completion(
    policy: &PolicyModel,
    pool: &[InstanceDescriptor],
    cfg: &RunConfig,
) -> Result<f64, PipelineError> {
    let p = ModelPolicy {
        model: policy,
        temperature: None,
    };
    Ok(task_completion(&p, pool, &cfg.eval_seeds())?.rate)
}

fn round_report(
    round: u32,
    policy: &PolicyModel,
    pools: &Pools,
    cfg: &RunConfig,
    new_examples: usize,
    dataset_size: usize,
) -> Result<RoundReport, PipelineError> {
    let r = RoundReport {
        round,
        train_completion: if cfg.eval.train {
            Some(completion(policy, &pools.train, cfg)?)
        } else {
            None
        },
        test_completion: completion(policy, &pools.test, cfg)?,
        new_examples,
        dataset_size,
    };
    tracing::info!(
        round,
        train = ?r.train_completion,
        test = r.test_completion,
        examples = dataset_size,
        "evaluated policy"
    );
    Ok(r)
}

struct Base {
    pools: Pools,
    demos: Vec<ImitationExample>,
    bc: PolicyModel,
    round0: RoundReport,
}

fn base(cfg: &RunConfig, out: Option<&RunDir>) -> Result<Base, PipelineError> {
    let pools = Pools::generate(cfg)?;
    tracing::info!(train = pools.train.len(), test = pools.test.len(), family = %cfg.env.family, "generated instances");
    let experts = expert_trajectories(&pools.train, cfg.seed)?;
    let demos = demonstrations(&experts);
    let bc = train_bc(&demos, cfg)?;
    let round0 = round_report(
        0,
        &bc,
        &pools,
        cfg,
        demos.len(),
        dedup_union([demos.as_slice()]).len(),
    )?;
    if let Some(dir) = out {
        let all: Vec<&InstanceDescriptor> = pools.train.iter().chain(&pools.test).collect();
        write_jsonl(&dir.instances(), &all)?;
        let records: Vec<DemoRecord> = experts.iter().map(DemoRecord::from).collect();
        write_jsonl(&dir.demos(), &records)?;
        write_jsonl(&dir.dataset(0), &demos)?;
        save_policy(&dir.model(0), &bc)?;
    }
    Ok(Base {
        pools,
        demos,
        bc,
        round0,
    })
}

fn report(
    cfg: &RunConfig,
    base: &Base,
    rounds: Vec<RoundReport>,
    ledger: &TokenLedger,
) -> RunReport {
    RunReport {
        method: cfg.method,
        family: cfg.env.family,
        seed: cfg.seed,
        train_instances: base.pools.train.len(),
        test_instances: base.pools.test.len(),
        demos: base.demos.len(),
        rounds,
        ledger: LedgerReport::from(ledger),
        feedback: None,
        actpred: None,
        dagger: None,
        adaptation: None,
    }
}

/// Behavioural cloning only.
pub fn run_bc(cfg: &RunConfig, out: Option<&RunDir>) -> Result<Artifacts, PipelineError> {
    let b = base(cfg, out)?;
    let ledger = TokenLedger::new(cfg.method.name(), cfg.budget.tokens);
    let report = report(cfg, &b, vec![b.round0.clone()], &ledger);
    Ok(Artifacts {
        report,
        pools: b.pools,
        policies: vec![b.bc],
        datasets: vec![b.demos],
        feedback: None,
        fmodel: None,
        ledger,
    })
}

/// Rollouts of the base policy shared by every annotation method.
fn annotation_rollouts(cfg: &RunConfig, b: &Base) -> Result<Vec<Trajectory>, PipelineError> {
    let c = CollectConfig {
        rollouts: cfg.collect.annotation_rollouts,
        ..cfg.collect.clone()
    };
    collect_rollouts(&b.bc, &b.pools.train, cfg.seed, "annotate", &c)
}

/// Train a feedback model from annotated windows, then run `cfg.rounds`
/// rounds of harvesting desirable behaviour and retraining.
pub fn run_lfm(cfg: &RunConfig, out: Option<&RunDir>) -> Result<Artifacts, PipelineError> {
    let b = base(cfg, out)?;
    let trajs = annotation_rollouts(cfg, &b)?;
    let ledger = Mutex::new(TokenLedger::new(cfg.method.name(), cfg.budget.tokens));
    let annotator = Annotator::new(&cfg.annotator, cfg.seed)?;
    let ds = build_feedback_dataset(
        &trajs,
        &annotator,
        &cfg.annotator.id(),
        cfg.budget.window_len,
        cfg.budget.window_count,
        &ledger,
        cfg.seed,
    )?;
    if ds.windows.is_empty() {
        return Err(if ds.exhausted {
            PipelineError::BudgetExhausted(format!(
                "budget of {} tokens buys no window",
                cfg.budget.tokens
            ))
        } else {
            PipelineError::Precondition("no feedback windows could be annotated".into())
        });
    }
    let (train, val) = balance_and_split(&ds.examples, cfg.seed)?;
    let fmodel = train_feedback_model(
        &train,
        &val,
        &cfg.feedback,
        cfg.annotator.detailed(),
        cfg.seed,
    )?;
    let val_f1 = if val.is_empty() {
        eval_f1(&fmodel, &train)?
    } else {
        eval_f1(&fmodel, &val)?
    };
    tracing::info!(
        windows = ds.windows.len(),
        examples = ds.examples.len(),
        yes = ds.yes_count(),
        f1 = val_f1.f1,
        "trained feedback model"
    );
    if let Some(dir) = out {
        write_jsonl(&dir.feedback(), &ds.windows)?;
        write_jsonl(&dir.feedback_examples(), &ds.examples)?;
        fmodel.save(&dir.fmodel())?;
    }
    let mut policies = vec![b.bc.clone()];
    let mut datasets = vec![b.demos.clone()];
    let mut rounds = vec![b.round0.clone()];
    for k in 1..=cfg.rounds {
        let (dk, stats) = collect_desirable(
            policies.last().unwrap(),
            &b.pools.train,
            &fmodel,
            k,
            cfg.seed,
            &cfg.collect,
        )?;
        tracing::info!(
            round = k,
            steps = stats.steps,
            kept = stats.kept,
            "collected desirable behaviour"
        );
        let n = dk.len();
        datasets.push(dk);
        let (pk, size) = improve_round(&datasets, cfg, k)?;
        rounds.push(round_report(k, &pk, &b.pools, cfg, n, size)?);
        if let Some(dir) = out {
            write_jsonl(&dir.dataset(k), &datasets[k as usize])?;
            save_policy(&dir.model(k), &pk)?;
        }
        policies.push(pk);
    }
    let ledger = ledger.into_inner().unwrap();
    let mut rep = report(cfg, &b, rounds, &ledger);
    rep.feedback = Some(FeedbackReport {
        annotator: ds.annotator.clone(),
        windows: ds.windows.len(),
        examples: ds.examples.len(),
        yes: ds.yes_count(),
        no: ds.examples.len() - ds.yes_count(),
        budget_exhausted: ds.exhausted,
        unparsed_windows: ds.unparsed,
        dropped_refs: ds.dropped_refs,
        train_examples: train.len(),
        val_examples: val.len(),
        val_f1,
    });
    Ok(Artifacts {
        report: rep,
        pools: b.pools,
        policies,
        datasets,
        feedback: Some(ds),
        fmodel: Some(fmodel),
        ledger,
    })
}

fn finish_baseline(
    cfg: &RunConfig,
    b: Base,
    d1: Vec<ImitationExample>,
    ledger: TokenLedger,
    out: Option<&RunDir>,
) -> Result<Artifacts, PipelineError> {
    let datasets = vec![b.demos.clone(), d1];
    let (p1, size) = improve_round(&datasets, cfg, 1)?;
    let r1 = round_report(1, &p1, &b.pools, cfg, datasets[1].len(), size)?;
    if let Some(dir) = out {
        write_jsonl(&dir.dataset(1), &datasets[1])?;
        save_policy(&dir.model(1), &p1)?;
    }
    let rep = report(cfg, &b, vec![b.round0.clone(), r1], &ledger);
    Ok(Artifacts {
        report: rep,
        pools: b.pools,
        policies: vec![b.bc, p1],
        datasets,
        feedback: None,
        fmodel: None,
        ledger,
    })
}

/// Query the annotator for the next action at states reached by the base
/// policy, until the budget runs out, then retrain on demonstrations plus
/// the predictions.
pub fn run_actpred(cfg: &RunConfig, out: Option<&RunDir>) -> Result<Artifacts, PipelineError> {
    let b = base(cfg, out)?;
    let trajs = annotation_rollouts(cfg, &b)?;
    let ledger = Mutex::new(TokenLedger::new(cfg.method.name(), cfg.budget.tokens));
    let annotator = Annotator::new(&cfg.annotator, cfg.seed)?;
    // Every (rollout, prefix length) pair in seeded order: the prefix length
    // is uniform per query and no state is asked about twice.
    let mut queries: Vec<(usize, usize)> = trajs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |k| (i, k)))
        .collect();
    queries.shuffle(&mut seeding::rng(cfg.seed, "actpred-queries", 0));
    let mut stats = ActPredReport {
        queries: 0,
        unparsed: 0,
        inexact: 0,
        budget_exhausted: false,
    };
    let mut d1 = Vec::new();
    for (i, k) in queries {
        let t = &trajs[i];
        let step = &t.steps[k];
        let ctx = t.context_at(k);
        match annotator.predict_action(&ctx, &step.candidates, &step.state, &t.instruction, &ledger)
        {
            Ok(m) => {
                stats.queries += 1;
                stats.inexact += !m.exact as usize;
                d1.push(t.imitation_example_with(k, 1, m.action));
            }
            Err(AnnotateError::Parse(_)) => {
                stats.queries += 1;
                stats.unparsed += 1;
            }
            Err(AnnotateError::Budget(_)) => {
                stats.budget_exhausted = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    tracing::info!(
        queries = stats.queries,
        unparsed = stats.unparsed,
        "collected action predictions"
    );
    if d1.is_empty() && stats.budget_exhausted {
        return Err(PipelineError::BudgetExhausted(format!(
            "budget of {} tokens buys no action prediction",
            cfg.budget.tokens
        )));
    }
    let ledger = ledger.into_inner().unwrap();
    let mut a = finish_baseline(cfg, b, d1, ledger, out)?;
    a.report.actpred = Some(stats);
    Ok(a)
}

/// Batched retroactive relabelling: the same windows the feedback model
/// would see, annotated with the expert action at every step.
pub fn run_dagger(cfg: &RunConfig, out: Option<&RunDir>) -> Result<Artifacts, PipelineError> {
    let b = base(cfg, out)?;
    let trajs = annotation_rollouts(cfg, &b)?;
    let ledger = Mutex::new(TokenLedger::new(cfg.method.name(), cfg.budget.tokens));
    let annotator = Annotator::new(&cfg.annotator, cfg.seed)?;
    let mut stats = DaggerReport {
        windows: 0,
        labelled_steps: 0,
        dropped_refs: 0,
        budget_exhausted: false,
    };
    let mut d1 = Vec::new();
    for (ti, start) in sample_windows(&trajs, cfg.budget.window_len, cfg.seed) {
        if stats.windows >= cfg.budget.window_count {
            break;
        }
        let t = &trajs[ti];
        let w = Window::from_trajectory(t, start, cfg.budget.window_len);
        let privileged = Privileged::from_trajectory(t, &w);
        match annotator.retro_actions(&w, &privileged, &ledger) {
            Ok((actions, dropped)) => {
                stats.windows += 1;
                stats.dropped_refs += dropped;
                for (n, m) in actions {
                    stats.labelled_steps += 1;
                    d1.push(t.imitation_example_with(n as usize - 1, 1, m.action));
                }
            }
            Err(AnnotateError::Budget(_)) => {
                stats.budget_exhausted = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    tracing::info!(
        windows = stats.windows,
        steps = stats.labelled_steps,
        "collected retroactive labels"
    );
    if d1.is_empty() && stats.budget_exhausted {
        return Err(PipelineError::BudgetExhausted(format!(
            "budget of {} tokens buys no window",
            cfg.budget.tokens
        )));
    }
    let ledger = ledger.into_inner().unwrap();
    let mut a = finish_baseline(cfg, b, d1, ledger, out)?;
    a.report.dagger = Some(stats);
    Ok(a)
}

/// One round of imitation on the test pool with data selected by the
/// feedback model, without annotator calls or new demonstrations. Returns
/// the adapted policy, the adaptation data and the report.
pub fn adapt(
    policy: &PolicyModel,
    fmodel: &FeedbackModel,
    datasets: &[Vec<ImitationExample>],
    pools: &Pools,
    cfg: &RunConfig,
) -> Result<(PolicyModel, Vec<ImitationExample>, AdaptReport), PipelineError> {
    let train_ids: std::collections::BTreeSet<&str> =
        pools.train.iter().map(|d| d.id.as_str()).collect();
    if pools.test.iter().any(|d| train_ids.contains(d.id.as_str())) {
        return Err(PipelineError::Precondition(
            "test pool overlaps the train pool".into(),
        ));
    }
    let round = datasets.len() as u32;
    let pre = completion(policy, &pools.test, cfg)?;
    let (da, stats) =
        collect_desirable(policy, &pools.test, fmodel, round, cfg.seed, &cfg.collect)?;
    let adapted = if da.is_empty() {
        policy.clone()
    } else {
        let mut all = datasets.to_vec();
        all.push(da.clone());
        improve_round(&all, cfg, round)?.0
    };
    let post = if da.is_empty() {
        pre
    } else {
        completion(&adapted, &pools.test, cfg)?
    };
    tracing::info!(pre, post, kept = stats.kept, "adapted to the test pool");
    Ok((
        adapted,
        da,
        AdaptReport {
            pre_test_completion: pre,
            post_test_completion: post,
            new_examples: stats.kept,
            rollout_steps: stats.steps,
            tokens_used: 0,
        },
    ))
}

fn load_run_datasets(dir: &RunDir) -> Result<Vec<Vec<ImitationExample>>, PipelineError> {
    let mut out = Vec::new();
    let mut k = 0;
    while dir.dataset(k).exists() {
        out.push(super::read_jsonl(&dir.dataset(k))?);
        k += 1;
    }
    Ok(out)
}

/// Adapt the final policy of a finished feedback-model run.
fn run_lfm_adapt(cfg: &RunConfig, out: Option<&RunDir>) -> Result<Artifacts, PipelineError> {
    let from = cfg
        .adapt
        .as_ref()
        .ok_or_else(|| PipelineError::Precondition("lfm_adapt needs [adapt] from_run".into()))?;
    let src = RunDir::open(&from.from_run);
    if !src.fmodel().exists() {
        return Err(PipelineError::Precondition(format!(
            "{} holds no trained feedback model",
            from.from_run.display()
        )));
    }
    let fmodel = FeedbackModel::load(&src.fmodel())?;
    let last = src.last_model_round().ok_or_else(|| {
        PipelineError::Precondition(format!("{} holds no policy", from.from_run.display()))
    })?;
    let policy = load_policy(&src.model(last))?;
    let datasets = load_run_datasets(&src)?;
    let pools = Pools::generate(cfg)?;
    let (adapted, da, rep) = adapt(&policy, &fmodel, &datasets, &pools, cfg)?;
    let ledger = TokenLedger::new(cfg.method.name(), cfg.budget.tokens);
    if let Some(dir) = out {
        write_jsonl(&dir.dataset(datasets.len() as u32), &da)?;
        save_policy(&dir.model(datasets.len() as u32), &adapted)?;
    }
    let report = RunReport {
        method: cfg.method,
        family: cfg.env.family,
        seed: cfg.seed,
        train_instances: pools.train.len(),
        test_instances: pools.test.len(),
        demos: datasets[0].len(),
        rounds: Vec::new(),
        ledger: LedgerReport::from(&ledger),
        feedback: None,
        actpred: None,
        dagger: None,
        adaptation: Some(rep),
    };
    let mut all = datasets;
    all.push(da);
    Ok(Artifacts {
        report,
        pools,
        policies: vec![policy, adapted],
        datasets: all,
        feedback: None,
        fmodel: Some(fmodel),
        ledger,
    })
}

fn save_policy(path: &Path, p: &PolicyModel) -> Result<(), PipelineError> {
    p.save(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn load_policy(path: &Path) -> Result<PolicyModel, PipelineError> {
    PolicyModel::load(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Run `cfg.method`, writing the run directory when `out` is given.
pub fn execute(cfg: &RunConfig, out: Option<&Path>) -> Result<Artifacts, PipelineError> {
    cfg.validate()?;
    let dir = match out {
        Some(p) => Some(RunDir::create(p)?),
        None => None,
    };
    if let Some(d) = &dir {
        d.write_text(&d.config_snapshot(), &cfg.snapshot())?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(format!("workers: {e}")))?;
    let a = pool.install(|| match cfg.method {
        Method::Bc => run_bc(cfg, dir.as_ref()),
        Method::Lfm => run_lfm(cfg, dir.as_ref()),
        Method::Actpred => run_actpred(cfg, dir.as_ref()),
        Method::Dagger => run_dagger(cfg, dir.as_ref()),
        Method::LfmAdapt => run_lfm_adapt(cfg, dir.as_ref()),
    })?;
    if let Some(d) = &dir {
        d.write_text(&d.report(), &a.report.to_json())?;
        d.write_text(
            &d.ledger(),
            &serde_json::to_string_pretty(&a.ledger).expect("ledgers serialize"),
        )?;
    }
    Ok(a)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use lfm_core::annotate::{parse_step_feedback, Annotator, Privileged, TokenLedger, Window};
use lfm_core::evalkit::summarize_runs;
use lfm_core::lfm::{eval_f1, FeedbackExample, FeedbackModel};
use lfm_core::pipeline::{
    demonstrations, execute, expert_trajectories, read_jsonl, write_jsonl, DemoRecord,
    PipelineError, Pools, RunConfig, RunDir, RunReport,
};
use lfm_core::policy::{rollout, ModelPolicy, PolicyModel, RandomPolicy};

#[derive(Parser, Debug)]
#[command(
    name = "lfm",
    version,
    about = "Policy improvement from language feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate instances and expert demonstrations.
    Gen(RunArgs),
    /// Run the configured method and write a run directory.
    Run(RunArgs),
    /// Summarize finished runs into a comparison table.
    Compare {
        /// Run directories holding report.json.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for compare.json and compare.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// F1 of a saved feedback model on labelled examples.
    EvalFmodel {
        #[arg(long)]
        fmodel: PathBuf,
        /// feedback_examples.jsonl of a run.
        #[arg(long)]
        examples: PathBuf,
        /// Write the score here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the annotation prompt, response and parsed labels for one
    /// window.
    AnnotatePreview {
        #[arg(long)]
        config: PathBuf,
        /// Instance id; the first train instance by default.
        #[arg(long)]
        instance: Option<String>,
        /// First step of the window (0-based).
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Policy file to roll out; a uniform-random policy by default.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write preview.txt here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<PipelineError>() {
        Some(PipelineError::Config(_)) => 2,
        Some(PipelineError::BudgetExhausted(_)) => 3,
        Some(PipelineError::Endpoint(_)) => 4,
        _ => 1,
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_gen(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = load_config(args)?;
    let dir = RunDir::create(&args.out)?;
    dir.write_text(&dir.config_snapshot(), &cfg.snapshot())?;
    let pools = Pools::generate(&cfg)?;
    let all: Vec<_> = pools.train.iter().chain(&pools.test).collect();
    write_jsonl(&dir.instances(), &all)?;
    let experts = expert_trajectories(&pools.train, cfg.seed)?;
    let records: Vec<DemoRecord> = experts.iter().map(DemoRecord::from).collect();
    write_jsonl(&dir.demos(), &records)?;
    write_jsonl(&dir.dataset(0), &demonstrations(&experts))?;
    tracing::info!(
        instances = all.len(),
        demos = records.len(),
        out = %args.out.display(),
        "wrote instances and demonstrations"
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = load_config(args)?;
    let a = execute(&cfg, Some(&args.out))?;
    tracing::info!(
        method = %cfg.method,
        test_completion = a.report.final_test_completion(),
        tokens = a.ledger.used,
        out = %args.out.display(),
        "run finished"
    );
    Ok(())
}

fn cmd_compare(runs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    let mut reports = Vec::with_capacity(runs.len());
    for r in runs {
        let path = RunDir::open(r).report();
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let rep: RunReport = serde_json::from_str(&text)
            .with_context(|| format!("{} is not a valid report", path.display()))?;
        reports.push(rep);
    }
    let summary = summarize_runs(&reports)?;
    let dir = RunDir::create(out)?;
    dir.write_text(
        &out.join("compare.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    dir.write_text(&out.join("compare.txt"), &summary.to_text())?;
    tracing::info!(rows = summary.rows.len(), out = %out.display(), "wrote comparison");
    Ok(())
}

fn cmd_eval_fmodel(fmodel: &Path, examples: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let model =
        FeedbackModel::load(fmodel).with_context(|| format!("loading {}", fmodel.display()))?;
    let ex: Vec<FeedbackExample> = read_jsonl(examples)?;
    let score = eval_f1(&model, &ex)?;
    let text = serde_json::to_string_pretty(&score)?;
    match out {
        Some(p) => {
            std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

struct Preview<'a> {
    config: &'a Path,
    instance: Option<&'a str>,
    start: usize,
    policy: Option<&'a Path>,
    seed: Option<u64>,
    out: Option<&'a Path>,
}

fn cmd_annotate_preview(p: Preview<'_>) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(p.config)?;
    if let Some(s) = p.seed {
        cfg.seed = s;
    }
    let pools = Pools::generate(&cfg)?;
    let desc = match p.instance {
        Some(id) => pools
            .train
            .iter()
            .chain(&pools.test)
            .find(|d| d.id == id)
            .ok_or_else(|| anyhow!("no instance with id `{id}`"))?,
        None => pools
            .train
            .first()
            .ok_or_else(|| anyhow!("no train instances"))?,
    };
    let traj = match p.policy {
        Some(path) => {
            let model =
                PolicyModel::load(path).with_context(|| format!("loading {}", path.display()))?;
            let pol = ModelPolicy {
                model: &model,
                temperature: cfg.collect.temperature,
            };
            rollout(&pol, desc, cfg.seed, "preview")?
        }
        None => rollout(&RandomPolicy, desc, cfg.seed, "preview")?,
    };
    if p.start >= traj.len() {
        return Err(anyhow!(
            "rollout has {} steps; --start {} is past its end",
            traj.len(),
            p.start
        ));
    }
    let window = Window::from_trajectory(&traj, p.start, cfg.budget.window_len);
    let privileged = Privileged::from_trajectory(&traj, &window);
    let annotator = Annotator::new(&cfg.annotator, cfg.seed)?;
    let ledger = Mutex::new(TokenLedger::new("preview", cfg.budget.tokens));
    let prompt = annotator.feedback_prompt(&window);
    let response = annotator.feedback_response(&window, &privileged, &ledger)?;
    let parsed = parse_step_feedback(&response, &window)?;
    let mut text = format!("## Prompt\n{prompt}\n\n## Response\n{response}\n\n## Parsed\n");
    for s in &parsed.labels {
        text.push_str(&format!("step {}: {}", s.step, s.label.as_str()));
        if let Some(e) = &s.explanation {
            text.push_str(&format!(" ({e})"));
        }
        text.push('\n');
    }
    text.push_str(&format!(
        "dropped references: {}\ntokens charged: {}\n",
        parsed.dropped,
        ledger.lock().unwrap().used
    ));
    match p.out {
        Some(dir) => {
            let d = RunDir::create(dir)?;
            d.write_text(&dir.join("preview.txt"), &text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare { runs, out } => cmd_compare(runs, out),
        Command::EvalFmodel {
            fmodel,
            examples,
            out,
        } => cmd_eval_fmodel(fmodel, examples, out.as_deref()),
        Command::AnnotatePreview {
            config,
            instance,
            start,
            policy,
            seed,
            out,
        } => cmd_annotate_preview(Preview {
            config,
            instance: instance.as_deref(),
            start: *start,
            policy: policy.as_deref(),
            seed: *seed,
            out: out.as_deref(),
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

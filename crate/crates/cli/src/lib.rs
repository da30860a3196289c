//! `clxai` subcommands. Exit status: 0 on success, 1 on bad input, 2 when a
//! verification finds a disagreement.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use clxai_core::explainer::instances::random_instances;
use clxai_core::explainer::{check_instance, InstanceCheck};
use clxai_core::game::{jsonl, Engine};
use clxai_core::metrics::{cohort_aggregates, export_report, session_metrics};
use clxai_core::predictor::{train_for_world, TrainParams, TrainedModel};
use clxai_core::simulator::{compare_policies, run_policy, write_logs, LearnerPolicy, PolicySummary};
use clxai_core::world::WorldConfig;
use serde::Serialize;
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;

/// A check ran to completion and found a problem.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

#[derive(Debug, Parser)]
#[command(
    name = "clxai",
    version,
    about = "Diet game: train, serve, simulate, verify and score"
)]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a decision-tree model on generated data and report held-out accuracy.
    Train(TrainArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Play headless sessions with a synthetic learner.
    Simulate(SimulateArgs),
    /// Compute the per-session metrics CSV from JSONL logs.
    Metrics(MetricsArgs),
    /// Compare the counterfactual search with exhaustive enumeration.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Args)]
pub struct WorldModelArgs {
    /// World definition JSON (default world when omitted).
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Trained model JSON (ground-truth oracle when omitted).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

impl WorldModelArgs {
    fn load(&self) -> Result<(WorldConfig, TrainedModel)> {
        let world = load_world(self.world.as_deref())?;
        let model = match &self.model {
            Some(p) => TrainedModel::load(p).with_context(|| format!("loading model {}", p.display()))?,
            None => TrainedModel::oracle(&world),
        };
        Ok((world, model))
    }

    fn engine(&self) -> Result<Engine> {
        let (world, model) = self.load()?;
        Ok(Engine::with_regenerated_stats(world, model)?)
    }
}

fn load_world(path: Option<&Path>) -> Result<WorldConfig> {
    match path {
        Some(p) => WorldConfig::load(p).with_context(|| format!("loading world {}", p.display())),
        None => Ok(WorldConfig::default()),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    /// Share of the generated rows held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config JSON; `CLXAI_ADDR`, `CLXAI_MODEL` and `CLXAI_DATA_DIR`
    /// override it and flags override those.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// random, greedy, ce-follower or noisy:P.
    #[arg(long)]
    pub policy: LearnerPolicy,
    #[arg(long, default_value_t = 100)]
    pub sessions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the `{session_id}.jsonl` logs.
    #[arg(long)]
    pub out: PathBuf,
    /// Also run this policy on the same seeds and report the comparison.
    #[arg(long)]
    pub compare: Option<LearnerPolicy>,
    /// Write the summary JSON here as well as printing it.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    pub rounds: u32,
    /// Explanation every k-th round.
    #[arg(long, default_value_t = 2)]
    pub interval: u32,
    #[command(flatten)]
    pub source: WorldModelArgs,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Glob of JSONL logs, e.g. 'logs/*.jsonl'.
    #[arg(long)]
    pub logs: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write cohort means and standard deviations as JSON.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    #[arg(long, default_value_t = 500)]
    pub instances: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub source: WorldModelArgs,
}

/// What a command prints: text for people, JSON for `--json`.
pub struct Report {
    pub text: String,
    pub json: serde_json::Value,
}

pub fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Serve(a) => serve(a),
        Command::Simulate(a) => simulate(a),
        Command::Metrics(a) => metrics(a),
        Command::OracleCheck(a) => oracle_check(a),
    }
}

fn train(a: &TrainArgs) -> Result<Report> {
    let world = load_world(a.world.as_deref())?;
    let params = TrainParams {
        depth_limit: a.depth,
        min_leaf: a.min_leaf,
        seed: a.seed,
    };
    let run = train_for_world(&world, a.samples, a.holdout, &params)?;
    run.model
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let hash = run.model.content_hash();
    Ok(Report {
        text: format!(
            "trained on {} rows; held-out accuracy {:.4} (clean labels {:.4}) on {} rows\nwrote {} (sha256 {hash})",
            run.train_rows,
            run.holdout.accuracy,
            run.holdout.clean_accuracy,
            run.holdout_rows,
            a.out.display()
        ),
        json: json!({
            "out": a.out,
            "model_hash": hash,
            "train_rows": run.train_rows,
            "holdout_rows": run.holdout_rows,
            "holdout": run.holdout,
        }),
    })
}

fn serve(a: &ServeArgs) -> Result<Report> {
    let overrides = clxai_service::Overrides {
        addr: a.addr.clone(),
        model: a.model.clone(),
        world: a.world.clone(),
        data_dir: a.data_dir.clone(),
        static_dir: a.static_dir.clone(),
    };
    let config = clxai_service::ServiceConfig::resolve(a.config.as_deref(), &overrides)?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .try_init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(clxai_service::serve(config.clone()))?;
    Ok(Report {
        text: "server stopped".into(),
        json: json!({ "stopped": true, "addr": config.addr }),
    })
}

fn simulate(a: &SimulateArgs) -> Result<Report> {
    let engine = a.source.engine()?;
    let mut template = engine.session_config("template", a.seed);
    template.total_rounds = a.rounds;
    template.explanation_interval = a.interval;
    template.validate()?;

    let sessions = run_policy(&engine, a.policy, &template, a.sessions, a.seed)?;
    write_logs(&a.out, &sessions)?;
    let mut written = sessions.len();
    let summary = match a.compare {
        None => serde_json::to_value(PolicySummary::of(a.policy, &sessions)?)?,
        Some(other) => {
            let others = run_policy(&engine, other, &template, a.sessions, a.seed)?;
            write_logs(&a.out, &others)?;
            written += others.len();
            serde_json::to_value(compare_policies(
                &engine, a.policy, other, &template, a.sessions, a.seed,
            )?)?
        }
    };
    if let Some(path) = &a.summary {
        std::fs::write(path, serde_json::to_string_pretty(&summary)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let text = match a.compare {
        None => format!(
            "{} sessions of {} written to {}\nmean fitness slope {:.3}, mean final fitness {:.2}",
            sessions.len(),
            a.policy,
            a.out.display(),
            summary["fitness_slope"]["mean"].as_f64().unwrap_or(f64::NAN),
            summary["final_fitness"]["mean"].as_f64().unwrap_or(f64::NAN),
        ),
        Some(other) => format!(
            "{written} sessions written to {}\n{} vs {}: slope gap {:.3}, final fitness gap {:.2}",
            a.out.display(),
            a.policy,
            other,
            summary["slope_gap"].as_f64().unwrap_or(f64::NAN),
            summary["final_fitness_gap"].as_f64().unwrap_or(f64::NAN),
        ),
    };
    Ok(Report { text, json: summary })
}

fn metrics(a: &MetricsArgs) -> Result<Report> {
    let mut paths: Vec<PathBuf> = glob::glob(&a.logs)
        .with_context(|| format!("bad glob {:?}", a.logs))?
        .collect::<Result<_, _>>()?;
    paths.sort();
    if paths.is_empty() {
        bail!("no logs match {:?}", a.logs);
    }
    let reports = paths
        .iter()
        .map(|p| {
            let events = jsonl::read_events(p).with_context(|| format!("reading {}", p.display()))?;
            session_metrics(&events).with_context(|| format!("scoring {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    export_report(&reports, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let cohort = cohort_aggregates(&reports)?;
    if let Some(path) = &a.cohort {
        std::fs::write(path, serde_json::to_string_pretty(&cohort)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Report {
        text: format!("{} sessions scored; wrote {}", reports.len(), a.out.display()),
        json: json!({ "sessions": reports.len(), "out": a.out, "cohort": cohort }),
    })
}

#[derive(Debug, Serialize)]
struct Mismatch {
    index: usize,
    instance: clxai_core::explainer::instances::Instance,
    check: InstanceCheck,
}

fn oracle_check(a: &OracleCheckArgs) -> Result<Report> {
    if a.instances == 0 {
        bail!("--instances must be at least 1");
    }
    let engine = a.source.engine()?;
    let explainer = engine.explainer();
    let mut agree = 0usize;
    let mut infeasible = 0usize;
    let mut failures = Vec::new();
    for (index, instance) in random_instances(engine.world(), a.instances, a.seed)
        .into_iter()
        .enumerate()
    {
        let check = check_instance(&explainer, &instance)?;
        match &check {
            InstanceCheck::Agree { .. } if check.passed() => agree += 1,
            InstanceCheck::BothInfeasible { .. } if check.passed() => infeasible += 1,
            _ => failures.push(Mismatch { index, instance, check }),
        }
    }
    let json = json!({
        "instances": a.instances,
        "seed": a.seed,
        "model_hash": engine.model_hash(),
        "agree": agree,
        "both_infeasible": infeasible,
        "failures": failures,
    });
    if !failures.is_empty() {
        let first = serde_json::to_string(&failures[0])?;
        return Err(VerificationFailed(format!(
            "{} of {} instances failed; first: {first}",
            failures.len(),
            a.instances
        ))
        .into());
    }
    Ok(Report {
        text: format!(
            "{} instances: {agree} counterfactuals identical to exhaustive search, {infeasible} infeasible with sound guidance",
            a.instances
        ),
        json,
    })
}

/// Exit status for a finished command.
pub fn exit_code(result: &Result<Report>) -> i32 {
    match result {
        Ok(_) => EXIT_OK,
        Err(e) if e.downcast_ref::<VerificationFailed>().is_some() => EXIT_VERIFICATION,
        Err(_) => EXIT_INVALID,
    }
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asmplan::harness::{infer_blueprint, plan_assembly, write_plans, PipelineConfig, PlanMode, Workspace};
use asmplan::{Blueprint, Error};
use clap::{Args, Parser, Subcommand};

/// Assembly planning: blueprint generation, sequence enumeration, model
/// training and evaluation, and full plan synthesis.
#[derive(Parser)]
#[command(name = "asmplan", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults to DIR/config.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Workspace directory.
    #[arg(long, global = true, default_value = "asmplan-out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the blueprint corpus.
    Gen,
    /// Enumerate feasible sequences for every blueprint.
    Enumerate,
    /// Emit training samples from the enumerated sequences.
    Dataset,
    /// Train the sequence model on the train split.
    Train,
    /// Infer a sequence for one blueprint directory.
    Infer {
        #[arg(long)]
        blueprint: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Plan sequence, motions and contacts.
    Plan {
        #[arg(long, default_value = "oracle")]
        mode: PlanMode,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Plan a single blueprint directory instead of the test split.
        #[arg(long)]
        blueprint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render metrics.json as report.md and report.svg.
    Report,
    /// gen, enumerate, dataset, train, eval, report and oracle plans.
    Run,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Infeasible(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Lib(Error::Divergence { .. }) => 4,
        Failure::Lib(Error::Planning(_) | Error::Geometry(_)) | Failure::Infeasible(_) => 3,
        Failure::Lib(_) => 2,
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, Error> {
    let saved = common.out.join("config.toml");
    let mut config = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None if saved.exists() => PipelineConfig::load(&saved)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.train.threads = common.jobs;
    config.validate()?;
    Ok(config)
}

fn print_json<T: serde::Serialize>(value: &T) {
    print_text(&(serde_json::to_string_pretty(value).expect("serializable") + "\n"));
}

fn print_text(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn checkpoint(ws: &Workspace, path: &Option<PathBuf>) -> Result<asmplan::model::ModelParams, Error> {
    ws.checkpoint(path.as_deref())
}

fn plan_one(dir: &Path, out: &Path, mode: PlanMode, ws: &Workspace, ckpt: &Option<PathBuf>, config: &PipelineConfig) -> Result<Vec<asmplan::harness::AssemblyPlan>, Failure> {
    let params = match mode {
        PlanMode::Model => Some(checkpoint(ws, ckpt)?),
        PlanMode::Oracle => None,
    };
    let bp = Blueprint::load(dir)?;
    let plan = plan_assembly(&bp, mode, params.as_ref(), &config.resolved())?;
    let plans = vec![plan];
    write_plans(out, &plans)?;
    Ok(plans)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli.common)?;
    let ws = Workspace::new(&cli.common.out, cli.common.jobs);
    match cli.command {
        Command::Gen => {
            let e = ws.generate(&config)?;
            eprintln!("generated {} blueprints in {}", e.len(), ws.root.display());
        }
        Command::Enumerate => {
            let r = ws.enumerate(&config)?;
            let total: usize = r.iter().map(|r| r.sequences.len()).sum();
            let empty = r.iter().filter(|r| r.sequences.is_empty()).count();
            eprintln!("{} blueprints, {total} sequences, {empty} without a sequence", r.len());
        }
        Command::Dataset => {
            let d = ws.dataset(&config)?;
            eprintln!("{} samples", d.len());
        }
        Command::Train => {
            let out = ws.train(&config)?;
            if let Some(last) = out.log.last() {
                eprintln!(
                    "epoch {} loss {:.4} val 1-Acc {:.3}",
                    last.epoch, last.train_loss, last.val_1acc
                );
            }
        }
        Command::Infer { blueprint, checkpoint: ckpt } => {
            let params = checkpoint(&ws, &ckpt)?;
            let bp = Blueprint::load(&blueprint)?;
            print_json(&infer_blueprint(&bp, &params, &config)?);
        }
        Command::Plan {
            mode,
            checkpoint: ckpt,
            blueprint,
        } => {
            let plans = match blueprint {
                Some(dir) => plan_one(&dir, &ws.root, mode, &ws, &ckpt, &config)?,
                None => {
                    let params = match mode {
                        PlanMode::Model => Some(checkpoint(&ws, &ckpt)?),
                        PlanMode::Oracle => None,
                    };
                    ws.plan(&config, mode, params.as_ref())?
                }
            };
            let failed: Vec<_> = plans.iter().filter(|p| !p.feasible).collect();
            eprintln!("{} of {} plans feasible", plans.len() - failed.len(), plans.len());
            if let Some(p) = failed.first() {
                let msg = p.failure.as_ref().map(|f| f.message.clone()).unwrap_or_default();
                return Err(Failure::Infeasible(format!("{}: {msg}", p.blueprint_id)));
            }
        }
        Command::Eval { checkpoint: ckpt } => {
            let params = checkpoint(&ws, &ckpt)?;
            print_json(&ws.evaluate(&config, &params)?);
        }
        Command::Report => {
            let m = ws.report()?;
            print_text(&asmplan::harness::metrics_table(&m.report));
        }
        Command::Run => {
            ws.generate(&config)?;
            ws.enumerate(&config)?;
            ws.dataset(&config)?;
            let out = ws.train(&config)?;
            let m = ws.evaluate(&config, &out.params)?;
            ws.report()?;
            print_text(&asmplan::harness::metrics_table(&m.report));
            let plans = ws.plan(&config, PlanMode::Oracle, None)?;
            let ok = plans.iter().filter(|p| p.feasible).count();
            eprintln!("{ok} of {} oracle plans feasible", plans.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::Infeasible(m) => eprintln!("planning failure: {m}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

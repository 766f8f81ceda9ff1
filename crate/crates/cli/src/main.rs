mod fail;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use biclkt_core::RunConfig;
use clap::{Parser, Subcommand};

use fail::{Fail, Outcome};
use stages::Ctx;

#[derive(Parser)]
#[command(name = "biclkt", version, about = "Contrastive pretraining of exercise embeddings for knowledge tracing")]
#[command(after_help = after_help())]
struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accept predecessor artifacts made with a different config.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic interaction log.
    Synth,
    /// Parse the interaction log and split students.
    Ingest,
    /// Build the per-concept influence graphs.
    BuildGraphs,
    /// Contrastive pretraining of exercise and concept embeddings.
    Pretrain,
    /// Train the response prediction head.
    TrainHead,
    /// Score the test students and run the linear probe.
    Evaluate,
    /// Sweep augmentation, embedding mode and head over seeds.
    Ablate,
    /// Every stage in order.
    Pipeline,
}

fn after_help() -> String {
    format!(
        "Config precedence: defaults, then --config, then {}<SECTION>_<KEY> variables, then flags.\n\nConfig keys:\n{}",
        biclkt_core::config::ENV_PREFIX,
        RunConfig::describe()
    )
}

fn load_config(cli: &Cli) -> Outcome<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p).map_err(|e| Fail::config(e.to_string()))?;
    }
    cfg.apply_env(std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome<()> {
    let cfg = load_config(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| Fail::config(format!("thread pool: {e}")))?;
    log::debug!("config fingerprint {}", cfg.fingerprint());
    let ctx = Ctx::new(cfg, cli.force);
    match cli.cmd {
        Command::Synth => stages::synth(&ctx),
        Command::Ingest => stages::ingest(&ctx),
        Command::BuildGraphs => stages::build_graphs(&ctx),
        Command::Pretrain => stages::pretrain_stage(&ctx),
        Command::TrainHead => stages::train_head_stage(&ctx),
        Command::Evaluate => stages::evaluate_stage(&ctx),
        Command::Ablate => stages::ablate(&ctx),
        Command::Pipeline => stages::pipeline(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}

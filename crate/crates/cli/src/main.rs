use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tabrel_cli::{run_stage, Overrides, PipelineConfig, Stage, StageContext, StageOutcome};

/// Table relation pipeline: candidate pair generation and table alignment,
/// run stage by stage with persisted artifacts.
#[derive(Parser, Debug)]
#[command(name = "tabrel", version, disable_help_subcommand = true)]
struct Args {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Stage to run: synth | normalize-graph | featurize | filter |
    /// train-candgen | classify-pairs | baseline | train-align | predict |
    /// evaluate.
    #[arg(long)]
    stage: String,

    /// Override the working directory for artifacts.
    #[arg(long)]
    workdir: Option<PathBuf>,

    /// Override the relevance confidence threshold.
    #[arg(long)]
    tau: Option<f64>,

    /// Override the column representation mode (desc|val|type).
    #[arg(long)]
    mode: Option<String>,

    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (wall time only; outputs are identical).
    #[arg(long)]
    workers: Option<usize>,

    /// Rebuild outputs and accept config-hash mismatches on inputs.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            // Help/version requests are not usage errors.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let Some(stage) = Stage::parse(&args.stage) else {
        eprintln!(
            "error: unknown stage {:?}; expected one of: {}",
            args.stage,
            Stage::ALL
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(", ")
        );
        return ExitCode::from(1);
    };

    let overrides = Overrides {
        workdir: args.workdir,
        tau: args.tau,
        mode: args.mode,
        seed: args.seed,
        workers: args.workers,
    };
    let config = match PipelineConfig::load(&args.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.kind.exit_code() as u8);
        }
    };

    let ctx = StageContext::new(config, args.force);
    match run_stage(stage, &ctx) {
        Ok(StageOutcome::Ran) => {
            println!("{}: done (config {})", stage.name(), ctx.hash);
            ExitCode::SUCCESS
        }
        Ok(StageOutcome::UpToDate) => {
            println!("{}: up to date (config {})", stage.name(), ctx.hash);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error in stage {}: {e}", stage.name());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}

//! `mixctl` — runs the expert → mixing → distillation → evaluation →
//! verification → report pipeline from a JSON configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage failure,
//! 4 verification inconclusive.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mixctl::pipeline::{run_pipeline, ExperimentConfig, PipelineError, RunOptions, Stage};

#[derive(Debug, Parser)]
#[command(name = "mixctl", version, about = "Mix expert controllers, distill a robust student and verify it")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Use the bundled configuration of a builtin system instead of --config.
    #[arg(long, global = true, value_name = "NAME", conflicts_with = "config")]
    system: Option<String>,
    /// Run only this stage; repeatable.
    #[arg(long = "stage", global = true, value_name = "NAME")]
    stages: Vec<String>,
    /// Global seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory, overriding the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Skip stages whose recorded artifacts already exist.
    #[arg(long, global = true)]
    resume: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Every stage in order (the default).
    Run,
    /// Build or train the expert controllers.
    TrainExpert,
    /// Train the weight-mixing policy over the experts.
    TrainMixing,
    /// Distill the mixed controller into the direct and robust students.
    Distill,
    /// Safe rates, energy and Lipschitz bounds of every controller.
    Evaluate,
    /// Polynomial approximation, reachability and invariant checks of the students.
    Verify,
    /// CSV tables and plot data from the earlier stages.
    Report,
    /// Print the effective configuration and exit.
    ShowConfig,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        match self {
            Command::TrainExpert => Some(Stage::TrainExpert),
            Command::TrainMixing => Some(Stage::TrainMixing),
            Command::Distill => Some(Stage::Distill),
            Command::Evaluate => Some(Stage::Evaluate),
            Command::Verify => Some(Stage::Verify),
            Command::Report => Some(Stage::Report),
            Command::Run | Command::ShowConfig => None,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = match (&cli.config, &cli.system) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(system)) => ExperimentConfig::bundled(system)?,
        (None, None) => return Err(PipelineError::Config("either --config or --system is required".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        // relative to the working directory, not the config file
        cfg.output_dir = std::env::current_dir().map(|d| d.join(out)).unwrap_or_else(|_| out.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, PipelineError> {
    let cfg = load_config(cli)?;
    let command = cli.command.as_ref().unwrap_or(&Command::Run);
    if let Command::ShowConfig = command {
        cfg.validate()?;
        println!("{}", cfg.to_json());
        return Ok(0);
    }
    let mut stages = cli.stages.iter().map(|s| Stage::parse(s)).collect::<Result<Vec<_>, _>>()?;
    stages.extend(command.stage());
    let summary = run_pipeline(&cfg, &RunOptions { stages, resume: cli.resume })?;
    for s in &summary.executed {
        println!("ran {s}");
    }
    for s in &summary.skipped {
        println!("skipped {s} (artifacts present)");
    }
    if summary.inconclusive {
        eprintln!("verification inconclusive: reachable set left the approximation domain");
    }
    println!("run directory: {}", summary.run_dir.display());
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

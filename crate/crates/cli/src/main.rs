mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;
use run::{CliError, CliResult, Run};

/// Explicit ReLU emulators of scalar conservation laws, their error bounds
/// and the surrogate-training experiments.
#[derive(Parser)]
#[command(name = "relu-scl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = "RELU_SCL_OUT", default_value = "relu-scl-out")]
    out: PathBuf,

    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Use full-scale experiment defaults.
    #[arg(long, global = true)]
    full_scale: bool,

    /// Print the plan and write only the manifest.
    #[arg(long, global = true)]
    dry_run: bool,

    /// More log output (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build an emulator network and tabulate its size against the bounds.
    Build,
    /// Check an emulator against the loop scheme and its invariants.
    Verify,
    /// Evaluate the closed-form bounds.
    Bounds,
    /// Run a reference finite-volume solver.
    FvSolve,
    /// Compute flux expansion modes and check their decay.
    KlModes,
    /// Train one surrogate network.
    Train,
    /// Run a dimension sweep, M sweep or architecture search.
    Experiment,
    /// Print every config key with its default.
    Schema,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Build => "build",
            Command::Verify => "verify",
            Command::Bounds => "bounds",
            Command::FvSolve => "fv-solve",
            Command::KlModes => "kl-modes",
            Command::Train => "train",
            Command::Experiment => "experiment",
            Command::Schema => "schema",
        }
    }
}

fn resolve(cli: &Cli) -> CliResult<Config> {
    let mut cfg = Config::defaults(cli.full_scale);
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    cfg.get::<u64>("seed")?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> CliResult<()> {
    if let Command::Schema = cli.command {
        print!("{}", config::schema_text());
        return Ok(());
    }
    let cfg = resolve(cli)?;
    let mut run = Run::new(cfg, cli.out.clone(), cli.dry_run)?;
    let result = match cli.command {
        Command::Build => commands::build(&mut run),
        Command::Verify => commands::verify(&mut run),
        Command::Bounds => commands::bounds(&mut run),
        Command::FvSolve => commands::fv_solve(&mut run),
        Command::KlModes => commands::kl_modes(&mut run),
        Command::Train => commands::train(&mut run),
        Command::Experiment => commands::experiment(&mut run),
        Command::Schema => unreachable!(),
    };
    let status = match &result {
        Ok(()) => "ok",
        Err(CliError::Check(_)) => "check_failed",
        Err(CliError::Usage(_)) => "config_error",
        Err(CliError::Failed(_)) => "failed",
    };
    run.write_manifest(cli.command.name(), status)?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

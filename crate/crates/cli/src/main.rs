//! `bellrelax` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use bellrelax_cli::commands::{self, FitModel, RatiosInput};
use bellrelax_cli::config::{RunConfig, Value};
use bellrelax_cli::{exit, write_run, CliError, CommandOutput, RunManifest, Stamp};

#[derive(Parser)]
#[command(name = "bellrelax", version, about = "Two-spin relaxation: rates, simulated experiments, fits and oracles")]
struct Cli {
    /// Run configuration (sectioned `key = value unit` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "bellrelax-out")]
    out: PathBuf,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic rates, parameter-free ratios and bounds; inversion of measured rates.
    Rates,
    /// Simulate the experiment battery (or Bell curves) and extract the rate set.
    Simulate,
    /// Fit a (t, value, sigma) CSV.
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// initial | monoexp | offset
        #[arg(long, default_value = "monoexp")]
        model: String,
        /// Initial-fit window [s] (default: adaptive).
        #[arg(long)]
        window: Option<f64>,
    },
    /// Operator and stochastic oracles (plus telegraph if configured); exit 4 on |z| > 4.
    Oracle,
    /// R1 for a literature CSV (built-in table when omitted), or R1–R3 for a RateSet JSON.
    Ratios {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Prepare a Bell pseudo-pure state and reconstruct it by tomography.
    Tomography,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rates => "rates",
            Command::Simulate => "simulate",
            Command::Extract { .. } => "extract",
            Command::Oracle => "oracle",
            Command::Ratios { .. } => "ratios",
            Command::Tomography => "tomography",
        }
    }

    fn needs_config(&self) -> bool {
        !matches!(self, Command::Extract { .. } | Command::Ratios { .. })
    }
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(CommandOutput, Stamp), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("--threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::parse(&read(p)?)?,
        None if cli.command.needs_config() => {
            return Err(CliError::Config { key: "--config".into(), msg: "required for this command".into() })
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set("run.seed", Value::Count(s))?;
    }
    let stamp = Stamp::new(&cfg);
    let mut out = match &cli.command {
        Command::Rates => commands::cmd_rates(&cfg, &stamp)?,
        Command::Simulate => commands::cmd_simulate(&cfg, &stamp)?,
        Command::Extract { input, model, window } => {
            let m = FitModel::parse(model).ok_or_else(|| CliError::Input(format!("--model: unknown model `{model}`")))?;
            let name = input.display().to_string();
            commands::cmd_extract(&cfg, &stamp, &name, &read(input)?, m, *window)?
        }
        Command::Oracle => commands::cmd_oracle(&cfg, &stamp)?,
        Command::Ratios { input } => match input {
            None => commands::cmd_ratios(&cfg, &stamp, RatiosInput::Embedded)?,
            Some(p) => {
                let name = p.display().to_string();
                let text = read(p)?;
                commands::cmd_ratios(&cfg, &stamp, RatiosInput::detect(&name, &text))?
            }
        },
        Command::Tomography => commands::cmd_tomography(&cfg, &stamp)?,
    };
    commands::add_config_copy(&mut out, &cfg, &stamp);
    Ok((out, stamp))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(&cli) {
        Ok((out, stamp)) => {
            print!("{}", out.summary);
            let code = out.exit_code();
            let manifest = RunManifest::new(cli.command.name(), &stamp, &out, start.elapsed(), code);
            if let Err(e) = write_run(&cli.out, &manifest, &out) {
                eprintln!("error: {e}");
                return ExitCode::from(exit::RUNTIME as u8);
            }
            if let Some(f) = &out.failure {
                eprintln!("error: {f}");
            }
            println!("outputs written to {}", cli.out.display());
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crio_cli::config::{Command, Format, IntegratorSection, RunConfig};
use crio_cli::{emit_results, run_command, CliError};

#[derive(Parser)]
#[command(
    name = "crio",
    version,
    about = "Protocol runs, cavity sweeps and Rydberg gate simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ideal protocol run over every measurement branch.
    ProtocolRun(Flags),
    /// Fidelity/efficiency sweep of the cavity link.
    SweepFe(Flags),
    /// Single gate simulation with population trace.
    GateSim(Flags),
    /// Gate fidelity averaged over angles or input states.
    AvgFidelity(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Payload path; an envelope is written next to it. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn load(command: Command, flags: &Flags) -> Result<RunConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    match cfg.command {
        Some(c) if c != command => {
            return Err(CliError::Config(format!(
                "command: config says `{c}` but `{command}` was invoked"
            )))
        }
        _ => cfg.command = Some(command),
    }
    if let Some(out) = &flags.out {
        cfg.output = Some(out.clone());
    }
    if let Some(f) = flags.format {
        cfg.format = Some(f);
    }
    if let Some(seed) = flags.seed {
        cfg.seed = Some(seed);
    }
    if let Some(tol) = flags.tol {
        let mut i = cfg
            .integrator
            .take()
            .unwrap_or(IntegratorSection::default());
        i.rtol = Some(tol);
        cfg.integrator = Some(i);
    }
    Ok(cfg)
}

fn execute(command: Command, flags: &Flags) -> Result<(), CliError> {
    let cfg = load(command, flags)?;
    let env = run_command(&cfg)?;
    for w in &env.warnings {
        eprintln!("warning: {w}");
    }
    let format = env.normalized.format.unwrap_or(command.default_format());
    let written = emit_results(&env, format, env.normalized.output.as_deref())?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Cmd::ProtocolRun(f) => (Command::ProtocolRun, f),
        Cmd::SweepFe(f) => (Command::SweepFe, f),
        Cmd::GateSim(f) => (Command::GateSim, f),
        Cmd::AvgFidelity(f) => (Command::AvgFidelity, f),
    };
    match execute(command, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `rdlab`: command-line driver for the reaction-diffusion laboratory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(rdlab_core::Error),
    NoCycle(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use rdlab_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::InvalidArgument(_)) => 2,
            CliError::Core(E::DegenerateModel(_)) => 3,
            CliError::Core(E::NumericalFailure(_) | E::InvariantViolation(_)) => 4,
            CliError::NoCycle(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::NoCycle(m) => write!(f, "no limit cycle: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<rdlab_core::Error> for CliError {
    fn from(e: rdlab_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "rdlab",
    version,
    about = "Competitive Lotka-Volterra reaction-diffusion laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Io {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium table and condition report.
    Equilibria(Io),
    /// Time map L(mu), KISS size and optional inversion.
    Timemap(Io),
    /// Radial shooting from the centre.
    Shoot(Io),
    /// Kinetic ODE trajectory and cycle detection.
    Ode(Io),
    /// Reaction-diffusion run with probes and classification.
    Pde(Io),
    /// Floquet multipliers of a detected cycle.
    Floquet(Io),
    /// Flatness margin and diffusion thresholds.
    Chs(Io),
    /// Full numerical experiment with pinned settings.
    ReproducePaper(Io),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RDLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("RDLAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (name, io) = match &cli.command {
        Command::Equilibria(io) => ("equilibria", io),
        Command::Timemap(io) => ("timemap", io),
        Command::Shoot(io) => ("shoot", io),
        Command::Ode(io) => ("ode", io),
        Command::Pde(io) => ("pde", io),
        Command::Floquet(io) => ("floquet", io),
        Command::Chs(io) => ("chs", io),
        Command::ReproducePaper(io) => ("reproduce-paper", io),
    };
    let cfg = match (&io.config, name) {
        (Some(path), _) => config::load(path)?,
        (None, "reproduce-paper") => config::RunConfig::default(),
        (None, _) => return Err(CliError::Config(format!("{name} needs --config <file>"))),
    };
    let out = io
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("rdlab-out").join(name));
    let mut dir = output::OutputDir::create(&out)?;
    let result = match cli.command {
        Command::Equilibria(_) => commands::equilibria(&cfg, &mut dir),
        Command::Timemap(_) => commands::timemap(&cfg, &mut dir),
        Command::Shoot(_) => commands::shoot(&cfg, &mut dir),
        Command::Ode(_) => commands::ode(&cfg, &mut dir),
        Command::Pde(_) => commands::pde(&cfg, &mut dir),
        Command::Floquet(_) => commands::floquet(&cfg, &mut dir),
        Command::Chs(_) => commands::chs(&cfg, &mut dir),
        Command::ReproducePaper(_) => commands::reproduce_paper(&cfg, &mut dir),
    };
    let config = serde_json::to_value(&cfg).map_err(|e| CliError::Io(e.to_string()))?;
    let extra = match &result {
        Ok(extra) => {
            let mut m = serde_json::json!({ "status": "ok" });
            if let (Some(m), serde_json::Value::Object(e)) = (m.as_object_mut(), extra.clone()) {
                m.extend(e);
            }
            m
        }
        Err(e) => serde_json::json!({ "status": "failed", "error": e.to_string(), "exit_code": e.exit_code() }),
    };
    dir.manifest(name, &config, extra)?;
    result.map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rdlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

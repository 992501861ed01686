//! `wgqd`: seeded, manifest-producing driver for the simulation toolkit.
//!
//! Every command resolves its configuration (file, defaults, flags),
//! writes it to `<out>/config.json`, writes its results next to it and
//! finishes with `<out>/manifest.json` listing every file with its
//! SHA-256 digest. Failures print a JSON error report on stderr, write it
//! to `<out>/error.json` when possible, and exit with status 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod manifest;

use manifest::{now, Outputs, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "wgqd", version, about = "Waveguide-coupled quantum dot source toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// JSON configuration for the command; omitted fields take defaults.
    #[arg(long, global = true, env = "WGQD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed for every stochastic stage.
    #[arg(long, global = true, env = "WGQD_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, env = "WGQD_OUT", default_value = "wgqd-out")]
    pub out: PathBuf,
    /// Full-fidelity defaults instead of desk-scale ones.
    #[arg(long, global = true, env = "WGQD_PAPER_MODE")]
    pub paper_mode: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "WGQD_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Electromagnetic coupling simulations.
    #[command(subcommand)]
    Fdtd(commands::fdtd::FdtdCommand),
    /// Photon statistics: simulation, correlation, fitting, correction.
    #[command(subcommand)]
    G2(commands::g2::G2Command),
    /// Iterative site-filling protocol.
    #[command(subcommand)]
    Placement(commands::placement::PlacementCommand),
    /// Loss-chain arithmetic.
    #[command(subcommand)]
    Budget(commands::budget::BudgetCommand),
}

impl Command {
    fn name(&self) -> String {
        let (group, sub) = match self {
            Command::Fdtd(c) => ("fdtd", c.name()),
            Command::G2(c) => ("g2", c.name()),
            Command::Placement(c) => ("placement", c.name()),
            Command::Budget(c) => ("budget", c.name()),
        };
        format!("{group} {sub}")
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    command: &'a str,
    error: String,
    causes: Vec<String>,
    kind: &'static str,
}

fn kind(err: &anyhow::Error) -> &'static str {
    use wgqd_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::InvalidGeometry(_)) => "invalid_geometry",
        Some(E::InvalidParameter { .. }) => "invalid_parameter",
        Some(E::CellBudget { .. }) => "cell_budget",
        Some(E::Unstable { .. }) => "unstable",
        Some(E::NotConverged { .. }) => "not_converged",
        Some(E::Monitor(_)) => "monitor",
        Some(E::FitNonConvergence { .. }) => "fit_non_convergence",
        Some(E::Unreachable { .. }) => "unreachable",
        Some(E::Format(_)) => "format",
        Some(E::Io(_)) => "io",
        Some(E::Json(_)) => "json",
        None if err.downcast_ref::<serde_json::Error>().is_some() => "config",
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "other",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let global = cli.global;
    let result = run(&name, &global, cli.command);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = ErrorReport {
                command: &name,
                error: err.to_string(),
                causes: err.chain().skip(1).map(|c| c.to_string()).collect(),
                kind: kind(&err),
            };
            let json = serde_json::to_string_pretty(&report).unwrap_or_else(|_| err.to_string());
            eprintln!("{json}");
            if std::fs::create_dir_all(&global.out).is_ok() {
                let _ = std::fs::write(global.out.join("error.json"), format!("{json}\n"));
            }
            ExitCode::FAILURE
        }
    }
}

fn run(name: &str, global: &GlobalArgs, command: Command) -> anyhow::Result<()> {
    if let Some(n) = global.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let started = now();
    let _ = std::fs::remove_file(global.out.join("error.json"));
    let mut out = Outputs::create(&global.out)?;
    match command {
        Command::Fdtd(c) => commands::fdtd::run(c, global, &mut out)?,
        Command::G2(c) => commands::g2::run(c, global, &mut out)?,
        Command::Placement(c) => commands::placement::run(c, global, &mut out)?,
        Command::Budget(c) => commands::budget::run(c, global, &mut out)?,
    }
    out.finish(RunManifest {
        tool: "wgqd",
        version: env!("CARGO_PKG_VERSION"),
        command: name.to_string(),
        seed: global.seed,
        paper_mode: global.paper_mode,
        config_source: global.config.as_ref().map(|p| p.display().to_string()),
        config_sha256: String::new(),
        started,
        finished: String::new(),
        outputs: Vec::new(),
    })?;
    Ok(())
}

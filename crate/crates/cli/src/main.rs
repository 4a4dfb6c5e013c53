//! `qcurv` — numerical laboratory for a fourth-order curvature functional
//! on discretized product 4-manifolds.
//!
//! Every command reads one JSON configuration, runs on the model it
//! describes, and writes a report directory (`report.json`,
//! `resolved_config.json`, CSV tables). Exit codes: 0 success, 2 invalid
//! input, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcurv_core::error::{QcurvError, Result};

use crate::config::RunConfig;
use crate::output::{render_run, write_run, CommandOutcome};

#[derive(Parser)]
#[command(
    name = "qcurv",
    version,
    about = "Curvature-functional laboratory on product 4-manifolds",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Geometric and spectral invariants of the model, with closed forms
    /// where the curvature is constant.
    Invariants(CommonArgs),
    /// Operator spectrum: eigenvalue table, kernel and negative counts.
    Spectrum(CommonArgs),
    /// Minimize the curvature functional (prescribed-curvature equation).
    Solve(CommonArgs),
    /// Track the solution across the deformation schedule.
    Continuation(CommonArgs),
    /// Exponential-class inequality over a bubble-plus-random family.
    Adams(CommonArgs),
    /// Mass-spreading-improved inequality with separated-ball filter.
    ImprovedAdams(CommonArgs),
    /// Concentration-profile diagnostics across scales.
    Bubble(CommonArgs),
    /// Recover the concentration pattern of a field and compare.
    Project(CommonArgs),
    /// Green-type function of the operator at a pole.
    Green(CommonArgs),
    /// Sampled min-max witness over the barycenter stratum.
    Minmax(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Invariants(_) => "invariants",
            Command::Spectrum(_) => "spectrum",
            Command::Solve(_) => "solve",
            Command::Continuation(_) => "continuation",
            Command::Adams(_) => "adams",
            Command::ImprovedAdams(_) => "improved-adams",
            Command::Bubble(_) => "bubble",
            Command::Project(_) => "project",
            Command::Green(_) => "green",
            Command::Minmax(_) => "minmax",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Invariants(a)
            | Command::Spectrum(a)
            | Command::Solve(a)
            | Command::Continuation(a)
            | Command::Adams(a)
            | Command::ImprovedAdams(a)
            | Command::Bubble(a)
            | Command::Project(a)
            | Command::Green(a)
            | Command::Minmax(a) => a,
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        QcurvError::Config(format!(
            "cannot read config {}: {e}",
            args.config.display()
        ))
    })?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        QcurvError::Config(format!("invalid config {}: {e}", args.config.display()))
    })?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.display().to_string();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(command: &Command) -> Result<PathBuf> {
    let args = command.args();
    let cfg = load_config(args)?;
    let config_dir = args.config.parent().unwrap_or_else(|| Path::new("."));
    let m = cfg.model.build(config_dir)?;

    let outcome: CommandOutcome = match command {
        Command::Invariants(_) => commands::run_invariants(&cfg, &m)?,
        Command::Spectrum(_) => commands::run_spectrum(&cfg, &m)?,
        Command::Solve(_) => commands::run_solve(&cfg, &m)?,
        Command::Continuation(_) => commands::run_continuation(&cfg, &m)?,
        Command::Adams(_) => commands::run_adams(&cfg, &m)?,
        Command::ImprovedAdams(_) => commands::run_improved_adams(&cfg, &m)?,
        Command::Bubble(_) => commands::run_bubble(&cfg, &m)?,
        Command::Project(_) => commands::run_project(&cfg, &m)?,
        Command::Green(_) => commands::run_green(&cfg, &m)?,
        Command::Minmax(_) => commands::run_minmax(&cfg, &m)?,
    };

    let run = render_run(command.name(), &cfg, &m, outcome)?;
    let dir = PathBuf::from(&cfg.output_dir);
    write_run(&dir, &run)?;
    Ok(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(dir) => {
            println!("{}: report written to {}", cli.command.name(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

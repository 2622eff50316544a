//! Command-line front end: one subcommand per experiment kind, plus
//! `replay-check` (byte equality of two stored tables) and `summarize`
//! (least-squares fits over a stored table).
//!
//! Exit codes: 0 success, 1 replay mismatch, 2 invalid config or table,
//! 3 resource guard, 4 i/o failure. Wall time goes to stderr; the output
//! file bytes are a function of the config alone.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rwre_core::config::{ExperimentConfig, ExperimentKind};
use rwre_core::experiments::{run_experiment, RunOptions};
use rwre_core::table::{self, ResultTable};
use rwre_core::Error;

#[derive(Parser)]
#[command(name = "rwre", version, about = "Random walks in random environments: experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Backtrack probability against the slab depth.
    Condt(RunArgs),
    /// Endpoint velocity over independent annealed walks.
    Velocity(RunArgs),
    /// Regeneration increments and renewal diagnostics.
    Regen(RunArgs),
    /// Two-walk intersection growth across radii.
    Intersect(RunArgs),
    /// Particle-view density survival over sampled environments.
    FnTail(RunArgs),
    /// Periodized chain: stationary vector against the density sequence.
    Torus(RunArgs),
    /// Escape times and membership probability of planted traps.
    Trap(RunArgs),
    /// Annealed kernel moments, peak decay, and Gaussian gap.
    Clt(RunArgs),
    /// Quenched against annealed exit histograms for a box.
    ExitStats(RunArgs),
    /// Byte-compare two stored result tables.
    ReplayCheck {
        first: PathBuf,
        second: PathBuf,
    },
    /// Fit the stamped (or default) regression specs of a stored table.
    Summarize {
        table: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config file; the kind's standard scales apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 takes the library default.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output path; falls back to the config's out.path, then <kind>.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. }
        | Error::Table { .. }
        | Error::Parameter(_)
        | Error::Distribution(_)
        | Error::Ellipticity { .. } => 2,
        Error::Guard { .. } => 3,
        Error::Io(_) => 4,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Condt(args) => run(ExperimentKind::CondT, args),
        Command::Velocity(args) => run(ExperimentKind::Velocity, args),
        Command::Regen(args) => run(ExperimentKind::Regen, args),
        Command::Intersect(args) => run(ExperimentKind::Intersect, args),
        Command::FnTail(args) => run(ExperimentKind::FnTail, args),
        Command::Torus(args) => run(ExperimentKind::Torus, args),
        Command::Trap(args) => run(ExperimentKind::Trap, args),
        Command::Clt(args) => run(ExperimentKind::Clt, args),
        Command::ExitStats(args) => run(ExperimentKind::ExitStats, args),
        Command::ReplayCheck { first, second } => replay_check(&first, &second),
        Command::Summarize { table } => summarize(&table),
    }
}

fn load_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cfg = ExperimentConfig::parse(&text)?;
            if cfg.kind != kind {
                return Err(Error::Parameter(format!(
                    "config declares experiment '{}' but the subcommand is '{}'",
                    cfg.kind.as_str(),
                    kind.as_str()
                )));
            }
            cfg
        }
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let cfg = match load_config(kind, &args) {
        Ok(cfg) => cfg,
        Err(err) => return fail(err),
    };
    let table = match run_experiment(&cfg, &RunOptions { threads: args.threads }) {
        Ok(table) => table,
        Err(err) => return fail(err),
    };
    let out: PathBuf = args
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.as_str())));
    if let Err(err) = table.write_to(&out) {
        return fail(err);
    }
    let wall = table.wall_time_seconds.unwrap_or(0.0);
    eprintln!("wrote {} ({} rows) in {:.3}s", out.display(), table.rows.len(), wall);
    ExitCode::SUCCESS
}

fn replay_check(first: &Path, second: &Path) -> ExitCode {
    match table::replay_check(first, second) {
        Ok(true) => {
            println!("identical");
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("different");
            ExitCode::from(1)
        }
        Err(err) => fail(err),
    }
}

fn summarize(path: &Path) -> ExitCode {
    let table = match ResultTable::from_file(path) {
        Ok(table) => table,
        Err(err) => return fail(err),
    };
    let fits = match table::summarize(&table) {
        Ok(fits) => fits,
        Err(err) => return fail(err),
    };
    for fit in fits {
        let half = 0.5 * (fit.slope_ci.1 - fit.slope_ci.0);
        println!(
            "{}: slope {} +- {} intercept {} r2 {} points {} dropped {}",
            fit.label,
            fit.fit.slope,
            half,
            fit.fit.intercept,
            fit.fit.r_squared,
            fit.points_used,
            fit.points_dropped
        );
    }
    ExitCode::SUCCESS
}

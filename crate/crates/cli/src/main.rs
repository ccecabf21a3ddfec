//! `geoscvx`: batch driver for the manifold trajectory optimizer.

mod config;
mod error;
mod export;
mod trajfile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use geoscvx::scvx::{self, RunStatus};
use log::{info, LevelFilter};

use config::RunConfig;
use error::{CliError, Result};
use trajfile::{Quantity, TrajectoryFile};

#[derive(Parser)]
#[command(name = "geoscvx", version, about = "Successive convexification on manifolds")]
struct Cli {
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and write trajectory.csv, history.csv and audit.csv.
    Run(RunArgs),
    /// Recompute unit-norm violations from a trajectory file.
    Audit { file: PathBuf },
    /// Extract a plot-ready table from a trajectory file.
    Plotdata {
        file: PathBuf,
        #[arg(value_enum)]
        quantity: Quantity,
        /// Write here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Built-in problem: landing, attitude-toy, lq-euclidean.
    #[arg(long)]
    problem: Option<String>,
    /// Landing parameter file (implies --problem landing).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(short = 'N', long)]
    segments: Option<usize>,
    #[arg(short = 'p', long)]
    order: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Any configuration key, e.g. --set mu_r=0.1.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if args.problem.is_some() {
        cfg.problem = args.problem.clone();
    }
    if args.params.is_some() {
        cfg.params = args.params.clone();
    }
    cfg.segments = args.segments.or(cfg.segments);
    cfg.order = args.order.or(cfg.order);
    cfg.epsilon = args.epsilon.or(cfg.epsilon);
    cfg.max_iters = args.max_iters.or(cfg.max_iters);
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    cfg.apply_overrides(&args.set)?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<RunStatus> {
    let cfg = build_config(args)?;
    let sc = cfg.scenario()?;
    let problem = sc.problem.as_ref();
    info!(
        "{} on {} segments of order {}",
        problem.name(),
        sc.grid.segments,
        sc.grid.order()
    );
    let res = scvx::run(problem, &sc.initial, &sc.grid, &sc.settings)?;
    let status = match &res.failure {
        Some((k, msg)) => format!("{} at iteration {k} (partial: last accepted reference): {msg}", res.status),
        None => res.status.to_string(),
    };

    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    export::write_atomic(
        &dir.join("trajectory.csv"),
        &export::trajectory_csv(problem, &sc.grid, &res.reference, &status),
    )?;
    export::write_atomic(&dir.join("history.csv"), &export::history_csv(&res.history))?;
    let (audit, final_violation) = export::audit_csv(problem, &sc.grid, &res.reference);
    export::write_atomic(&dir.join("audit.csv"), &audit)?;

    let worst = res.history.iter().map(|r| r.membership_violation).fold(final_violation, f64::max);
    let objective = res.history.last().map_or(f64::NAN, |r| r.objective);
    let mut line = format!(
        "status={} iterations={} objective={} max_norm_violation={}",
        res.status,
        res.history.len(),
        export::fmt(objective),
        export::fmt(worst)
    );
    if let Some(k) = problem.state_labels().iter().position(|(n, _)| n == "m") {
        line.push_str(&format!(" terminal_mass={}", export::fmt(res.reference.final_state().coords[k])));
    }
    println!("{line}");
    if let Some((k, msg)) = &res.failure {
        eprintln!("error: iteration {k}: {msg}; artifacts in {} are partial", dir.display());
    }
    Ok(res.status)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Run(args) => Ok(match run(args)? {
            RunStatus::Converged => 0,
            RunStatus::MaxIters => 2,
            RunStatus::SubproblemFailure => 3,
        }),
        Command::Audit { file } => {
            print!("{}", trajfile::audit_text(&TrajectoryFile::read(file)?));
            Ok(0)
        }
        Command::Plotdata { file, quantity, out } => {
            let table = trajfile::plotdata(&TrajectoryFile::read(file)?, *quantity)?;
            match out {
                Some(path) => export::write_atomic(path, &table)?,
                None => print!("{table}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => LevelFilter::Error,
        (false, 0) => LevelFilter::Warn,
        (false, 1) => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

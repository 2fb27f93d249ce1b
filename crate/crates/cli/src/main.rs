use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clustersync::simulator::{DEFAULT_DT, DEFAULT_T_FINAL};
use clustersync::{Error, DEFAULT_TOL};

mod commands;

/// Check, repair and simulate cluster synchronization of Kuramoto networks.
///
/// Exit codes: 0 success / synchronizable, 1 not synchronizable, 2 repair
/// infeasible, 3 input or usage error, 4 non-finite simulation state,
/// 5 internal error.
#[derive(Debug, Parser)]
#[command(name = "clustersync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Only print machine-readable output and errors.
    #[arg(long, global = true)]
    quiet: bool,

    /// Relative tolerance for the structural and frequency tests.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide whether the partition is phase synchronizable.
    Check {
        input: PathBuf,
        /// Also write the JSON verdict here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute the smallest masked weight change that makes the partition synchronizable.
    Repair {
        input: PathBuf,
        /// Repaired network file.
        #[arg(long)]
        out: PathBuf,
        /// Report path (defaults to <out>.report.json next to the network).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        repair: RepairArgs,
    },
    /// Integrate the dynamics and write trajectory and cohesion metrics.
    Simulate {
        input: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// check, repair if needed, check again, simulate before and after.
    Pipeline {
        input: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        repair: RepairArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Debug, Args)]
struct RepairArgs {
    /// Ignore the file's mask and allow any inter-cluster weight to change.
    #[arg(long)]
    unconstrained: bool,
    /// Do not warn when an existing edge changes sign.
    #[arg(long)]
    allow_sign_flips: bool,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = DEFAULT_T_FINAL)]
    t_final: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    /// `cluster-step` (cluster k starts at k rad) or a comma-separated list.
    #[arg(long, default_value = "cluster-step")]
    theta0: String,
    /// Keep every k-th step.
    #[arg(long, default_value_t = 1)]
    sample_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok = 0,
    NotSynchronizable = 1,
    Infeasible = 2,
    InputError = 3,
    NonFinite = 4,
    Internal = 5,
}

impl From<&Error> for Status {
    fn from(e: &Error) -> Self {
        match e {
            Error::Infeasible { .. } => Status::Infeasible,
            Error::NonFiniteState { .. } => Status::NonFinite,
            Error::InternalInconsistency(_)
            | Error::VerificationFailed { .. }
            | Error::InfeasibleResult => Status::Internal,
            _ => Status::InputError,
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| {
            writeln!(
                buf,
                "{}: {}",
                record.level().as_str().to_lowercase(),
                record.args()
            )
        })
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Status::InputError as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging(cli.quiet);
    let status = match commands::run(&cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            Status::from(&e)
        }
    };
    ExitCode::from(status as u8)
}

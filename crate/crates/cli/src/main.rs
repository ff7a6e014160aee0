//! `nsched`: schedule inspection, λ and hyperparameter solving, reverse-chain
//! simulation, error bounds and the experiment harness.
//!
//! Exit codes: 0 success, 1 an asserted property failed, 2 invalid or
//! infeasible input, 64 usage error, 70 numeric failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::Format;

pub const EXIT_ASSERTION: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_NUMERIC: u8 = 70;

/// Overrides the default output directory of `simulate` and `experiment`.
pub const OUT_DIR_ENV: &str = "NSCHED_OUT_DIR";

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (result format 1, sample format 1)");

#[derive(Parser)]
#[command(name = "nsched", version = VERSION, about = "Fisher-optimal noise schedules for diffusion samplers")]
struct Cli {
    /// Output format; only json and csv are stable.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for parallel sweeps. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or construct schedules.
    #[command(subcommand)]
    Schedule(ScheduleCmd),
    /// Budget-dependent rate λ_n = W(K n)/T.
    Lambda(LambdaArgs),
    /// Simulate the reverse chain and write terminal samples.
    Simulate(SimulateArgs),
    /// Run an experiment spec and write CSV plus JSON metadata.
    Experiment(ExperimentArgs),
    /// Evaluate error bounds.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Run the smoothing inequality suite along a schedule.
    Check(CheckArgs),
}

#[derive(Subcommand)]
enum ScheduleCmd {
    /// Tabulate t, f, g, α, σ² and SNR of a schedule file.
    Show {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 11)]
        grid: usize,
    },
    /// Resolve adaptive ACS hyperparameters and emit the schedule.
    Acs(AcsArgs),
}

#[derive(Args)]
struct AcsArgs {
    #[arg(long, allow_negative_numbers = true)]
    theta: f64,
    /// ω as a fraction ρ of the energy E_n.
    #[arg(long = "omega-frac", allow_negative_numbers = true)]
    omega_frac: f64,
    #[arg(long, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long = "K", allow_negative_numbers = true)]
    k: f64,
    #[arg(long)]
    n: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 11)]
    grid: usize,
}

#[derive(Args)]
struct LambdaArgs {
    #[arg(long = "K", allow_negative_numbers = true)]
    k: f64,
    #[arg(long, allow_negative_numbers = true)]
    n: i64,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to $NSCHED_OUT_DIR or the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Require the exact terminal law (Gaussian targets only).
    #[arg(long = "exact-law")]
    exact_law: bool,
    /// Write samples in the binary format instead of CSV.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; defaults to $NSCHED_OUT_DIR or the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleTarget {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    target: PathBuf,
}

#[derive(Args)]
struct MonteCarlo {
    /// Monte Carlo samples for mixture moments when d > 1.
    #[arg(long = "mc-samples", default_value_t = 20_000)]
    mc_samples: usize,
    #[arg(long = "mc-seed", default_value_t = 0)]
    mc_seed: u64,
}

#[derive(Subcommand)]
enum BoundsCmd {
    /// Exact initialization plus discretization decomposition (Gaussian targets).
    Girsanov {
        #[command(flatten)]
        files: ScheduleTarget,
        #[arg(long)]
        n: usize,
    },
    /// Variational bound from the Fisher trajectory, unit constant.
    Thm1 {
        #[command(flatten)]
        files: ScheduleTarget,
        #[arg(long)]
        n: usize,
        /// Points of the quadratically graded Fisher grid.
        #[arg(long, default_value_t = 401)]
        grid: usize,
        #[command(flatten)]
        mc: MonteCarlo,
    },
    /// Closed-form bounds for VP-linear and VP-constant schedules.
    Legacy(LegacyArgs),
}

#[derive(Args)]
struct LegacyArgs {
    #[arg(long, value_parser = ["vp-linear", "vp-constant"])]
    kind: String,
    #[arg(long = "g-min")]
    g_min: Option<f64>,
    #[arg(long = "g-max")]
    g_max: Option<f64>,
    #[arg(long = "g-const")]
    g_const: Option<f64>,
    #[arg(long = "j-star")]
    j_star: f64,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    kappa: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long)]
    h: f64,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    files: ScheduleTarget,
    #[arg(long, default_value_t = 50)]
    grid: usize,
    #[command(flatten)]
    mc: MonteCarlo,
}

/// A failed command: message for standard error plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<noise_sched::Error> for Failure {
    fn from(e: noise_sched::Error) -> Self {
        let code = match e {
            noise_sched::Error::Io { .. } => EXIT_INPUT,
            ref e if e.is_input_error() => EXIT_INPUT,
            _ => EXIT_NUMERIC,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// What a successful command printed, plus whether its assertions held.
pub struct Outcome {
    pub stdout: String,
    pub passed: bool,
}

fn dispatch(cli: Cli) -> Result<Outcome, Failure> {
    let f = cli.format;
    match cli.command {
        Command::Schedule(ScheduleCmd::Show { config, grid }) => commands::schedule_show(&config, grid, f),
        Command::Schedule(ScheduleCmd::Acs(a)) => {
            commands::schedule_acs(a.theta, a.omega_frac, a.gamma, a.k, a.n, a.horizon, a.grid, f)
        }
        Command::Lambda(a) => commands::lambda(a.k, a.n, a.horizon, f),
        Command::Simulate(a) => commands::simulate(
            &commands::SimulateRequest {
                schedule: a.schedule,
                target: a.target,
                n: a.n,
                paths: a.paths,
                seed: a.seed,
                out: a.out,
                exact_law: a.exact_law,
                binary: a.binary,
            },
            f,
        ),
        Command::Experiment(a) => commands::experiment(&a.spec, a.out, f),
        Command::Bounds(BoundsCmd::Girsanov { files, n }) => commands::bounds_girsanov(&files.schedule, &files.target, n, f),
        Command::Bounds(BoundsCmd::Thm1 { files, n, grid, mc }) => {
            commands::bounds_thm1(&files.schedule, &files.target, n, grid, mc.mc_samples, mc.mc_seed, f)
        }
        Command::Bounds(BoundsCmd::Legacy(a)) => commands::bounds_legacy(
            &a.kind,
            a.g_min,
            a.g_max,
            a.g_const,
            a.j_star,
            a.d,
            a.kappa,
            a.horizon,
            a.h,
            f,
        ),
        Command::Check(a) => commands::check(&a.files.schedule, &a.files.target, a.grid, a.mc.mc_samples, a.mc.mc_seed, f),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure {jobs} workers: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match dispatch(cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ASSERTION)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_names_format_versions() {
        assert!(VERSION.contains(&format!("result format {}", noise_sched::evaluation::RESULT_FORMAT_VERSION)));
        assert!(VERSION.contains(&format!("sample format {}", noise_sched::sampler::BINARY_VERSION)));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

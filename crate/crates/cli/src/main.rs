mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use blindcrb::constraint::ConstraintSpec;
use blindcrb::{Field, Model};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "blindcrb", version, about = "FIMs and constrained CRBs for blind FIR multichannel estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Channel and model options shared by the analysis commands.
#[derive(Debug, Clone, Args)]
pub struct ModelOpts {
    /// Channel JSON file, or `h1` / `h2` for the built-in fixtures.
    pub channel: String,
    /// deterministic or gaussian.
    #[arg(long, default_value = "deterministic")]
    pub model: Model,
    /// Symbol field: real or complex.
    #[arg(long, default_value = "real")]
    pub field: Field,
    /// Burst length in symbols.
    #[arg(long = "M", short = 'M', default_value_t = 20)]
    pub burst: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_a2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma_v2: f64,
    /// Seed for the deterministic symbol burst and Monte Carlo trials.
    #[arg(long, env = "BLINDCRB_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Zeros, reducibility, identifiability verdict and FIM rank of a channel.
    Analyze {
        #[command(flatten)]
        opts: ModelOpts,
    },
    /// Constrained CRBs on the channel parameter, one CSV row per constraint.
    Crb {
        #[command(flatten)]
        opts: ModelOpts,
        /// norm | phase | norm+phase | known:i | linear:<file> | reducible-ti | reducible-proj | minimal
        #[arg(long = "constraint", short = 'c', required = true)]
        constraints: Vec<ConstraintSpec>,
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
    },
    /// tr(CRB) with each coefficient known in turn, against the minimal bound.
    SweepKnown {
        #[command(flatten)]
        opts: ModelOpts,
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
    },
    /// Analytic FIM against the Monte Carlo score covariance.
    FimCheck {
        #[command(flatten)]
        opts: ModelOpts,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Relative tolerance on the trace.
        #[arg(long, default_value_t = 0.05)]
        trace_tol: f64,
        /// Largest admissible |z| per entry.
        #[arg(long, default_value_t = 3.0)]
        z_max: f64,
        /// Evaluate the analytic FIM at sigma_v2 times this factor (negative control).
        #[arg(long)]
        corrupt_sigma_v2: Option<f64>,
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
    },
    /// Monte Carlo MSE of the blind estimator against tr(CRB).
    Mse {
        /// Experiment config JSON.
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long, env = "BLINDCRB_SEED")]
        seed: Option<u64>,
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Analyze { opts } => commands::analyze(opts),
        Command::Crb { opts, constraints, output } => commands::crb(opts, constraints, output.as_deref()),
        Command::SweepKnown { opts, output } => commands::sweep_known(opts, output.as_deref()),
        Command::FimCheck { opts, trials, trace_tol, z_max, corrupt_sigma_v2, output } => commands::fim_check(
            opts,
            &commands::Gates { trials: *trials, trace_tol: *trace_tol, z_max: *z_max },
            *corrupt_sigma_v2,
            output.as_deref(),
        ),
        Command::Mse { config, seed, output } => commands::mse(config, *seed, output.as_deref()),
    };
    match res {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

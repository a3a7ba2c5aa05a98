//! `eprsim`: reproducible experiments on the local hidden-parameter model.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::report::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "eprsim",
    version,
    about = "Local hidden-parameter model of EPR spin correlations"
)]
struct Cli {
    /// Flat key = value experiment configuration; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Parameters of the model and its layer universe.
#[derive(Args, Debug, Clone, Default)]
struct ModelArgs {
    /// Spline resolution n (>= 4).
    #[arg(long)]
    n: Option<usize>,

    /// Number of weight intervals L.
    #[arg(long = "intervals", short = 'L')]
    weight_count: Option<usize>,

    /// Number of layer pairs M.
    #[arg(long = "layers")]
    pairs: Option<usize>,

    /// Random seed; required by every command that draws random numbers.
    #[arg(long)]
    seed: Option<u64>,

    /// Share one weight vector across all layers.
    #[arg(long)]
    tie_weights: bool,

    /// Sample layers in blocks of cyclic shifts.
    #[arg(long)]
    balanced: bool,

    /// Use the unit-square variant of the first-layer measure.
    #[arg(long)]
    genuine: bool,

    /// Load a saved universe instead of sampling one.
    #[arg(long)]
    universe: Option<PathBuf>,

    /// Rescale settings onto the sphere instead of rejecting non-unit input.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct SettingArgs {
    /// Station-1 setting `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,

    /// Station-2 setting `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,

    /// Coplanar pair a = (1,0,0), b = (cos t, sin t, 0) for an angle in degrees.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["a", "b"])]
    angle: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Convention {
    /// Analyzer vector at twice the polarizer angle.
    Polarizer,
    /// Analyzer vector at the given angle.
    Spin,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the first-layer identities for one setting pair.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        settings: SettingArgs,
    },
    /// Sample a layer universe and write it as JSON.
    Layers {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Exact dependence diagnostics for settings a, b and alternative c.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        settings: SettingArgs,
        /// Alternative station-2 setting `x,y,z`.
        #[arg(long, allow_hyphen_values = true)]
        c: Option<String>,
        /// Also evaluate conditional means with the companion sign flip removed.
        #[arg(long)]
        witness: bool,
    },
    /// Monte Carlo estimate of E{A_a B_b}.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        settings: SettingArgs,
        #[arg(long)]
        trials: Option<u64>,
        /// Draw labels from Poisson emission times with this mean wait.
        #[arg(long)]
        emission_theta: Option<f64>,
        /// Per-batch means as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// CHSH combination for angles a, a', b, b' in degrees.
    Chsh {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "0,45,22.5,67.5", allow_hyphen_values = true)]
        angles: String,
        #[arg(long, value_enum, default_value_t = Convention::Polarizer)]
        convention: Convention,
        #[arg(long)]
        trials: Option<u64>,
        /// The four correlation estimates as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Poisson emission trace: discrepancy decay, labels and gating.
    Poisson {
        /// Mean waiting time between emissions.
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        /// Number of emissions.
        #[arg(long, default_value_t = 1_000_000)]
        k: usize,
        /// Number of labels.
        #[arg(long, default_value_t = 50)]
        labels: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Readiness probability at station 1.
        #[arg(long)]
        p1: Option<f64>,
        /// Readiness probability at station 2.
        #[arg(long)]
        p2: Option<f64>,
        /// (k, D*_k) pairs as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Spline approximation S(x, y) of (y - x)^2 on a grid.
    Splines {
        #[arg(long)]
        n: Option<usize>,
        /// Grid points per axis.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// x, y, S(x, y), residual rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

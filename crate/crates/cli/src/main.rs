//! `tearsim` — command-line laboratory for the coupled thin-film/osmolarity
//! system: time integration to rupture, thinning, or equilibrium; steady
//! continuation in the capacity shift or mobility exponent; regime sweeps;
//! and analysis utilities. Runs are deterministic: the model has no
//! randomness, and single-threaded executions are bit-reproducible.

use clap::{Parser, Subcommand};
use tearsim_cli::config::{self, Mode};
use tearsim_cli::runner;

#[derive(Parser)]
#[command(name = "tearsim", version, about = "Thin-film/osmolarity PDE laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: std::path::PathBuf,
    /// Output directory; overrides the config's output.dir.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Worker threads for sweep fan-out (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system in time from initial data.
    Simulate(CommonArgs),
    /// Solve the steady constrained problem at the configured parameters.
    Equilibrium(CommonArgs),
    /// Trace an equilibrium branch in xi, m, or a constant capacity.
    Continue(CommonArgs),
    /// Fan out runs over mobility exponents and build a regime map.
    Sweep(CommonArgs),
    /// Fit the late-time thinning law to a diagnostics series.
    FitThinning(CommonArgs),
    /// Solve the a-priori upper-bound fixed-point equation.
    CheckBound(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Equilibrium(a) => (Mode::Equilibrium, a),
        Command::Continue(a) => (Mode::Continue, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::FitThinning(a) => (Mode::FitThinning, a),
        Command::CheckBound(a) => (Mode::CheckBound, a),
    };
    if let Err(message) = run(mode, args) {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}

fn run(mode: Mode, args: &CommonArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("reading {}: {e}", args.config.display()))?;
    let mut config = config::parse_config(&text, mode).map_err(|e| e.to_string())?;
    if let Some(out) = &args.out {
        config.out_dir = out.display().to_string();
    }
    let threads = args
        .threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
        .max(1);
    runner::run_experiment(&config, threads)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rckf_cli::{cmd_bench, cmd_estimate, cmd_experiment, cmd_simulate, GlobalOpts};

#[derive(Parser)]
#[command(name = "rckf", version, about = "Cubature Kalman filter experiments on a synchronous machine")]
struct Cli {
    /// JSON config; the shipped default scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the experiment matrix (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write truth.csv and measurements.csv.
    Simulate,
    /// Run one filter and write its estimates and metrics.
    Estimate {
        #[arg(long, default_value = "rckf")]
        filter: String,
        /// Measurement CSV to filter instead of synthesized data.
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// Run the noise x manner x filter matrix.
    Experiment {
        #[arg(long, default_value_t = 50)]
        seeds: usize,
        /// Fill the mean_step_ms column (makes matrix.csv machine-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Time the CKF and RCKF measurement updates.
    Bench {
        #[arg(long, default_value_t = 2000)]
        steps: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = GlobalOpts {
        config: cli.config,
        out_dir: cli.out_dir,
        seed: cli.seed,
        jobs: cli.jobs,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Simulate => cmd_simulate(&opts).map(|_| ()),
        Command::Estimate { filter, measurements } => cmd_estimate(&opts, &filter, measurements.as_deref()).map(|_| ()),
        Command::Experiment { seeds, timing } => cmd_experiment(&opts, seeds, timing).map(|_| ()),
        Command::Bench { steps } => cmd_bench(&opts, steps).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

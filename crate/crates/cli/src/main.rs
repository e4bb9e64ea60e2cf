use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rotsim::{cmd_optimize, cmd_selftest, cmd_simulate, resolve_override, Fidelity};

#[derive(Parser)]
#[command(
    name = "rotsim",
    version,
    about = "Simulation and optimization of multidimensional signal rotations \
             over phase-noise-impaired multichannel transmission"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation plan and emit results.csv + manifest.json.
    Simulate {
        /// Plan file (key = value lines; arrays for sweep axes).
        #[arg(long)]
        plan: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (env: ROTSIM_WORKERS; default: available cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Master seed (env: ROTSIM_SEED; default: the plan's seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Sample-size fidelity: `paper` enforces >= 10^6 symbols/point.
        #[arg(long, default_value = "quick")]
        fidelity: String,
    },
    /// Optimize the four free Givens angles against a Monte Carlo metric.
    Optimize {
        /// Optimizer config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for trace.csv and result.json.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (env: ROTSIM_WORKERS; default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the built-in verification suite.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            plan,
            out,
            workers,
            seed,
            fidelity,
        } => (|| {
            let workers = resolve_override(
                workers,
                "ROTSIM_WORKERS",
                std::thread::available_parallelism().map_or(1, |n| n.get()),
            )?;
            let seed = match (seed, std::env::var("ROTSIM_SEED")) {
                (Some(s), _) => Some(s),
                (None, Ok(text)) => Some(
                    text.parse()
                        .map_err(|_| anyhow::anyhow!("bad ROTSIM_SEED value `{text}`"))?,
                ),
                (None, Err(_)) => None,
            };
            let fidelity = match fidelity.as_str() {
                "paper" => Fidelity::Paper,
                "quick" => Fidelity::Quick,
                other => anyhow::bail!("fidelity must be `paper` or `quick`, got `{other}`"),
            };
            cmd_simulate(&plan, &out, workers, seed, fidelity)
        })(),
        Command::Optimize {
            config,
            out,
            workers,
        } => (|| {
            let workers = resolve_override(
                workers,
                "ROTSIM_WORKERS",
                std::thread::available_parallelism().map_or(1, |n| n.get()),
            )?;
            cmd_optimize(&config, &out, workers)
        })(),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

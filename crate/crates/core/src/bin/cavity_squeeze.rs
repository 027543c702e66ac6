//! Command-line front end: `estimate`, `simulate`, `optimize`, `figure`.
//!
//! Exit codes: 0 on success, 1 on numerical failure, 2 on usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cavity_squeeze::cli::{run_figure, run_scenario, run_simulation, FigureName, ScaleMode, Scenario, SimulateConfig};
use cavity_squeeze::estimates::scaling_estimate;
use cavity_squeeze::model::PhysicalParams;

#[derive(Parser)]
#[command(name = "cavity-squeeze", version, about = "Cavity spin-squeezing simulation and optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the analytic operating-point estimate for a parameter set.
    Estimate {
        /// JSON file holding the physical parameters.
        #[arg(long)]
        config: PathBuf,
        /// Generic drive ratio Omega/Delta used in the estimate.
        #[arg(long, default_value_t = 1.0 / 50.0)]
        omega_over_delta: f64,
    },
    /// Integrate a trajectory for a parameter set and write its CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an optimization scenario and print the JSON report.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel workers.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Reproduce a figure-style dataset.
    Figure {
        name: FigureName,
        #[arg(long, value_enum, default_value_t = ScaleMode::Desk)]
        scale: ScaleMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run() -> cavity_squeeze::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Estimate {
            config,
            omega_over_delta,
        } => {
            let text = std::fs::read_to_string(config)?;
            let params: PhysicalParams = serde_json::from_str(&text)?;
            params.validate()?;
            let est = scaling_estimate(
                params.n_atoms,
                params.cooperativity(),
                params.kappa,
                params.gamma_total(),
                omega_over_delta,
            );
            println!("{}", serde_json::to_string_pretty(&est)?);
        }
        Command::Simulate { config, out } => {
            let text = std::fs::read_to_string(config)?;
            let cfg: SimulateConfig = serde_json::from_str(&text)?;
            let csv = run_simulation(&cfg)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join("trajectory.csv");
                    std::fs::write(&path, csv)?;
                    println!("{}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Optimize {
            config,
            out,
            seed,
            jobs,
        } => {
            let text = std::fs::read_to_string(config)?;
            let mut scenario: Scenario = serde_json::from_str(&text)?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let report = run_scenario(&scenario, jobs)?;
            let pretty = serde_json::to_string_pretty(&report)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("optimize.json"), &pretty)?;
            }
            println!("{pretty}");
        }
        Command::Figure {
            name,
            scale,
            seed,
            jobs,
            out,
        } => {
            let result = run_figure(name, scale, seed, jobs, &out)?;
            for f in &result.files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

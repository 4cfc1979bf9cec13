mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ConvergenceArgs, Status};
use config::{CommonArgs, RunConfig};

/// Regularization-path experiments for the bang-bang heat control problem.
#[derive(Parser)]
#[command(name = "regpath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve along the regularization path and tabulate errors and rates.
    Path {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve for one regularization parameter.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Regularization parameter; defaults to 2^-l for the first level.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Run the toy-scale property checks.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Observed orders of the space and time discretization.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Time-step counts of the temporal study.
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        time_levels: Vec<usize>,
        /// Nodes per side of the temporal study mesh.
        #[arg(long, default_value_t = 65)]
        temporal_nodes: usize,
        /// Nodes per side of the spatial study meshes.
        #[arg(long, value_delimiter = ',', default_value = "17,33,65")]
        space_levels: Vec<usize>,
        /// Time steps of the spatial study.
        #[arg(long, default_value_t = 1024)]
        fine_steps: usize,
    },
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Path { common } => ("path", common),
        Command::Solve { common, .. } => ("solve", common),
        Command::Verify { common } => ("verify", common),
        Command::Convergence { common, .. } => ("convergence", common),
    };
    let cfg = match RunConfig::resolve(name, common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match cli.command {
        Command::Path { .. } => commands::cmd_path(&cfg),
        Command::Solve { alpha, .. } => commands::cmd_solve(&cfg, alpha),
        Command::Verify { .. } => commands::cmd_verify(&cfg),
        Command::Convergence {
            time_levels,
            temporal_nodes,
            space_levels,
            fine_steps,
            ..
        } => commands::cmd_convergence(
            &cfg,
            &ConvergenceArgs {
                time_levels,
                temporal_nodes,
                space_levels,
                fine_steps,
            },
        ),
    };
    match result {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ctlo::cli::{cmd_evaluate, cmd_run, cmd_simulate};

#[derive(Parser)]
#[command(version, about = "Continuous-time LiDAR odometry with adaptive node intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the odometry over a directory of .scan files.
    Run {
        #[arg(long)]
        scans: PathBuf,
        /// Flat key = value file; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "trajectory.txt")]
        trajectory: PathBuf,
        #[arg(long, default_value = "diagnostics.log")]
        diagnostics: PathBuf,
    },
    /// Write simulated scans and ground truth.
    Simulate {
        #[arg(long, default_value = "box_room")]
        world: String,
        #[arg(long, default_value = "turning")]
        profile: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seconds; defaults to the profile's own length.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated trajectory with ground truth.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// RPE distance in seconds.
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
    },
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run {
            scans,
            config,
            trajectory,
            diagnostics,
        } => cmd_run(&scans, config.as_deref(), &trajectory, &diagnostics).map(|out| {
            println!("nodes={} events={}", out.trajectory.len(), out.events.len());
        }),
        Command::Simulate {
            world,
            profile,
            seed,
            duration,
            out,
        } => cmd_simulate(&world, &profile, seed, &out, duration).map(|s| {
            println!("scans={} points={}", s.scans, s.points);
            println!("scan_dir={}", s.scan_dir.display());
            println!("ground_truth={}", s.ground_truth.display());
        }),
        Command::Evaluate {
            estimate,
            ground_truth,
            delta,
        } => cmd_evaluate(&estimate, &ground_truth, delta).map(|r| print!("{r}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

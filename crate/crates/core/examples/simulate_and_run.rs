//! Simulates a recording and runs the odometry over it.
//!
//! ```text
//! cargo run --release --example simulate_and_run -- box_room turning 10
//! ```

use std::time::Instant;

use ctlo::eval::{compute_ate, compute_rpe};
use ctlo::pipeline::{run_sequence, OdometryConfig};
use ctlo::sim::{simulate, ProfileKind, SensorModel, WorldKind};

fn main() -> ctlo::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let world: WorldKind = args.first().map_or("box_room", String::as_str).parse()?;
    let profile: ProfileKind = args.get(1).map_or("turning", String::as_str).parse()?;
    let duration = args
        .get(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| profile.default_duration());

    let sim = simulate(world, profile, duration, &SensorModel::default(), 42)?;
    println!("{} scans of {world}/{profile}", sim.scans.len());

    let started = Instant::now();
    let out = run_sequence(OdometryConfig::default(), &sim.scans)?;
    let elapsed = started.elapsed().as_secs_f64();
    let count = |k| out.events_of(k).count();
    println!(
        "nodes={} merges={} halvings={} constrains={} dt_changes={} elapsed={elapsed:.2}s",
        out.trajectory.len(),
        count("merge"),
        count("halve_voxel"),
        count("constrain"),
        count("dt_change"),
    );
    if let Some(e) = &out.error {
        println!("stopped early: {e}");
    }
    if out.trajectory.len() >= 3 {
        println!("ate_rmse_m={:.4}", compute_ate(&out.trajectory, &sim.ground_truth)?);
        println!("rpe_rmse_m={:.4}", compute_rpe(&out.trajectory, &sim.ground_truth, 1.0)?);
    }
    Ok(())
}

//! Runs one simulated recording with each adaptive mechanism switched off
//! in turn and prints accuracy next to the diagnostics counts.
//!
//! ```text
//! cargo run --release --example ablation -- box_room aggressive_turn 10
//! ```

use ctlo::eval::compute_ate;
use ctlo::pipeline::{run_sequence, OdometryConfig};
use ctlo::sim::{simulate, ProfileKind, SensorModel, WorldKind};

fn main() -> ctlo::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let world: WorldKind = args.first().map_or("box_room", String::as_str).parse()?;
    let profile: ProfileKind = args.get(1).map_or("aggressive_turn", String::as_str).parse()?;
    let duration = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let sim = simulate(world, profile, duration, &SensorModel::default(), 42)?;

    let variants: [(&str, fn(&mut OdometryConfig)); 5] = [
        ("full", |_| {}),
        ("no_pca", |c| c.enable_pca = false),
        ("no_dm", |c| c.enable_dm = false),
        ("fixed_interval", |c| {
            c.enable_pca = false;
            c.enable_dm = false;
        }),
        ("no_deskew", |c| c.deskew = false),
    ];
    println!("{world}/{profile}, {duration} s");
    for (name, tweak) in variants {
        let mut cfg = OdometryConfig::default();
        tweak(&mut cfg);
        let out = run_sequence(cfg, &sim.scans)?;
        let ate = match &out.error {
            Some(e) => format!("stopped ({e})"),
            None => format!("{:.4}", compute_ate(&out.trajectory, &sim.ground_truth)?),
        };
        let n = |k| out.events_of(k).count();
        println!(
            "{name:<15} ate_m={ate:<8} nodes={} dt_changes={} merges={} halvings={} constrains={}",
            out.trajectory.len(),
            n("dt_change"),
            n("merge"),
            n("halve_voxel"),
            n("constrain"),
        );
    }
    Ok(())
}

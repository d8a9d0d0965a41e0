//! Scan-to-scan principal-direction check that shortens the node interval
//! during aggressive rotation.
//!
//! ```text
//! cargo run --release --example pca_assessment
//! ```

use ctlo::map::voxel_downsample;
use ctlo::pca::{assess, summarize_cloud};
use ctlo::pipeline::OdometryConfig;
use ctlo::sim::{simulate, ProfileKind, SensorModel, WorldKind};

fn main() -> ctlo::Result<()> {
    let cfg = OdometryConfig::default();
    let sim = simulate(WorldKind::BoxRoom, ProfileKind::AggressiveTurn, 6.0, &SensorModel::default(), 7)?;
    println!("turn onsets: {:?}", sim.profile.turn_onsets);

    let mut last = None;
    for scan in &sim.scans {
        let summary = summarize_cloud(&voxel_downsample(&scan.positions(), cfg.pca_ds))?;
        if let Some(prev) = &last {
            let d = assess(&summary, prev, cfg.k_vec, cfg.k_val)?;
            let yaw_rate = sim.profile.rate_at(scan.t_begin).phi.z;
            println!(
                "t={:.1}  yaw_rate={yaw_rate:+.1}  phi_max={:6.2} deg  v_max={:+.3}  {:?}",
                scan.t_begin, d.phi_max, d.v_max, d.verdict
            );
        }
        last = Some(summary);
    }
    Ok(())
}

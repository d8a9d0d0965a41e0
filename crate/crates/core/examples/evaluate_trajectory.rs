//! ATE and RPE of a drifting estimate, through the TUM files the CLI uses.
//!
//! ```text
//! cargo run --example evaluate_trajectory
//! ```

use nalgebra::Vector3;

use ctlo::eval::{compute_ate, compute_rpe};
use ctlo::io::{read_trajectory, write_trajectory};
use ctlo::se3::{Pose, StampedPose};
use ctlo::sim::{GroundTruth, ProfileKind};

fn main() -> ctlo::Result<()> {
    let profile = ProfileKind::Straight.build(Pose::identity(), 10.0)?;
    let gt = GroundTruth::sample(&profile, 1000.0);

    // 1 cm/s of lateral drift plus a rigid offset, which ATE aligns away.
    let offset = Pose::from_axis_angle(Vector3::new(0.0, 0.0, 0.3), Vector3::new(5.0, -2.0, 0.5));
    let est: Vec<StampedPose> = (0..=100)
        .map(|i| {
            let t = i as f64 * 0.1;
            let drift = Pose::from_translation(Vector3::new(0.0, 0.01 * t, 0.0));
            StampedPose::new(offset * drift * profile.pose_at(t), t)
        })
        .collect();

    let dir = std::env::temp_dir().join(format!("ctlo-eval-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| ctlo::Error::Input(e.to_string()))?;
    let path = dir.join("estimate.txt");
    write_trajectory(&path, &est)?;
    let est = read_trajectory(&path)?;

    println!("ate_rmse_m={:.4}", compute_ate(&est, &gt)?);
    for delta in [0.5, 1.0, 2.0] {
        println!("rpe_rmse_m(delta={delta})={:.4}", compute_rpe(&est, &gt, delta)?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

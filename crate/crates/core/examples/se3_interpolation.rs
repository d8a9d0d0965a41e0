//! Pose interpolation along the geodesic between two control nodes, the
//! building block of every point's pose.
//!
//! ```text
//! cargo run --example se3_interpolation
//! ```

use nalgebra::Vector3;

use ctlo::se3::{exp_map, extrapolate, interpolate_pose, log_map, Pose, StampedPose, Twist};

fn main() -> ctlo::Result<()> {
    let a = StampedPose::new(Pose::identity(), 0.0);
    // 0.1 s at 1 m/s forward while yawing at 2 rad/s.
    let xi = Twist::new(Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.2));
    let b = StampedPose::new(exp_map(&xi), 0.1);

    let back = log_map(&b.pose)?;
    println!("log(exp(xi)) - xi = {:.3e}", (back.to_vector() - xi.to_vector()).norm());

    for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let p = interpolate_pose(&a.pose, &b.pose, s)?;
        let t = p.translation();
        println!(
            "s={s:.2}  t=({:+.5}, {:+.5}, {:+.5})  yaw={:.4} rad",
            t.x,
            t.y,
            t.z,
            p.rotation_angle()
        );
    }

    // A new node is seeded by continuing the last segment's motion.
    let c = extrapolate(&a, &b, 0.2)?;
    println!("extrapolated to t=0.2: yaw={:.4} rad", c.rotation_angle());
    Ok(())
}

//! Per-direction localizability of a segment that sees a single plane, and
//! the management action it triggers.
//!
//! ```text
//! cargo run --example localizability
//! ```

use nalgebra::{Matrix6, RowVector6, Vector3};

use ctlo::degeneracy::{build_info_matrices, localizability, manage, ManageLimits, Thresholds};

fn main() {
    // A 20 x 20 patch of the floor, 1.2 m below the sensor.
    let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = (0..400)
        .map(|i| {
            let (x, y) = ((i % 20) as f64 * 0.25 - 2.5, (i / 20) as f64 * 0.25 - 2.5);
            (Vector3::new(x, y, -1.2), Vector3::z())
        })
        .collect();

    // Gauss-Newton block of the point-to-plane rows [n^T, (p x n)^T].
    let mut h = Matrix6::zeros();
    for (p, n) in &pairs {
        let t = p.cross(n);
        let row = RowVector6::new(n.x, n.y, n.z, t.x, t.y, t.z);
        h += row.transpose() * row;
    }

    let info = build_info_matrices(&pairs);
    let report = localizability(&info, &h, &Thresholds::default());
    println!("{}", report.levels_string());
    for (i, c) in report.translation.iter().enumerate() {
        let v = report.v_t.column(i);
        println!("translation ({:+.2}, {:+.2}, {:+.2}): {:?} l_s={} l_c={}", v.x, v.y, v.z, c.level, c.l_s, c.l_c);
    }
    for (i, c) in report.rotation.iter().enumerate() {
        let v = report.v_r.column(i);
        println!("rotation    ({:+.2}, {:+.2}, {:+.2}): {:?} l_s={} l_c={}", v.x, v.y, v.z, c.level, c.l_s, c.l_c);
    }

    let limits = ManageLimits::default();
    println!("short segment  -> {}", manage(&report, 0.5, 0.04, 0.04, &limits).kind());
    println!("at the cap     -> {}", manage(&report, 0.5, 0.08, 0.04, &limits).kind());
}

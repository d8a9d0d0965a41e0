//! Trajectory accuracy against ground truth.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::se3::{Pose, StampedPose};
use crate::sim::GroundTruth;

fn ensure_overlap(est: &[StampedPose], gt: &GroundTruth) -> Result<()> {
    if est.len() < 3 {
        return Err(Error::InsufficientOverlap(format!(
            "need at least 3 estimated poses, got {}",
            est.len()
        )));
    }
    let (a, b) = (est[0].stamp, est[est.len() - 1].stamp);
    if a < gt.t_begin() - 1e-9 || b > gt.t_end() + 1e-9 {
        return Err(Error::InsufficientOverlap(format!(
            "estimate spans [{a}, {b}] but ground truth covers [{}, {}]",
            gt.t_begin(),
            gt.t_end()
        )));
    }
    Ok(())
}

/// Rigid transform `T` minimizing `sum |T * src_i - dst_i|^2` (no scale).
pub fn align_points(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Pose {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let cov = src
        .iter()
        .zip(dst)
        .fold(Matrix3::zeros(), |acc, (s, d)| acc + (d - cd) * (s - cs).transpose());
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    Pose::from_parts(r, cd - r * cs)
}

/// Translational RMSE after rigidly aligning the estimate onto ground truth
/// sampled at the estimate's stamps.
pub fn compute_ate(est: &[StampedPose], gt: &GroundTruth) -> Result<f64> {
    ensure_overlap(est, gt)?;
    let src: Vec<_> = est.iter().map(|p| *p.pose.translation()).collect();
    let dst = est
        .iter()
        .map(|p| gt.pose_at(p.stamp).map(|g| *g.translation()))
        .collect::<Result<Vec<_>>>()?;
    let t = align_points(&src, &dst);
    let sq: f64 = src
        .iter()
        .zip(&dst)
        .map(|(s, d)| (t.transform_point(s) - d).norm_squared())
        .sum();
    Ok((sq / src.len() as f64).sqrt())
}

/// Translational RMSE of relative motions over `delta` seconds. Each pose
/// is paired with the first later pose at least `delta` after it.
pub fn compute_rpe(est: &[StampedPose], gt: &GroundTruth, delta: f64) -> Result<f64> {
    ensure_overlap(est, gt)?;
    if !(delta > 0.0) {
        return Err(Error::Input(format!("RPE delta {delta} must be positive")));
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    for (i, a) in est.iter().enumerate() {
        let j = i + est[i..].partition_point(|p| p.stamp < a.stamp + delta - 1e-9);
        let Some(b) = est.get(j) else { break };
        let ga = gt.pose_at(a.stamp)?;
        let gb = gt.pose_at(b.stamp)?;
        let rel_gt = ga.inverse() * gb;
        let rel_est = a.pose.inverse() * b.pose;
        sq += (rel_gt.inverse() * rel_est).translation().norm_squared();
        count += 1;
    }
    if count == 0 {
        return Err(Error::InsufficientOverlap(format!("no pose pairs {delta} s apart")));
    }
    Ok((sq / count as f64).sqrt())
}

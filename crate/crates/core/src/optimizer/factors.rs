//! Residuals and analytic Jacobians of the window's cost terms.
//!
//! All Jacobians are taken with respect to left perturbations
//! `T <- Exp(delta) * T` of the node poses, `delta = (rho, phi)`.

use nalgebra::{Matrix6, RowVector6, Vector6};

use crate::error::Result;
use crate::map::PlaneFit;
use crate::scan::TimedPoint;
use crate::se3::{
    exp_map, left_jacobian, left_jacobian_inv, log_map, right_jacobian_inv,
    timestamp_fraction, Pose, StampedPose, Twist,
};

/// A sensor point matched to a local map plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub point: TimedPoint,
    pub plane: PlaneFit,
    /// Confidence in `(0, 1]`, taken from the plane's planarity.
    pub weight: f64,
}

/// Precomputed quantities of one linear trajectory segment, shared by all
/// points in it.
#[derive(Clone, Debug)]
pub struct SegmentInterpolant {
    lo: StampedPose,
    hi: StampedPose,
    /// `Log(T_hi * T_lo^-1)`: the segment motion in the world frame.
    eta: Twist,
    jl_inv: Matrix6<f64>,
    jr_inv: Matrix6<f64>,
}

impl SegmentInterpolant {
    pub fn new(lo: &StampedPose, hi: &StampedPose) -> Result<Self> {
        let eta = log_map(&(hi.pose * lo.pose.inverse()))?;
        Ok(Self {
            lo: *lo,
            hi: *hi,
            jl_inv: left_jacobian_inv(&eta),
            jr_inv: right_jacobian_inv(&eta),
            eta,
        })
    }

    pub fn fraction(&self, stamp: f64) -> Result<f64> {
        timestamp_fraction(stamp, self.lo.stamp, self.hi.stamp)
    }

    /// Trajectory pose at fraction `s`; equals `T_lo * Exp(s * Log(T_lo^-1 T_hi))`.
    pub fn pose_at(&self, s: f64) -> Pose {
        exp_map(&self.eta.scaled(s)) * self.lo.pose
    }

    /// Pose plus the 6x6 maps from node perturbations to the perturbation of
    /// the interpolated pose.
    pub fn pose_and_jacobians(&self, s: f64) -> (Pose, Matrix6<f64>, Matrix6<f64>) {
        let step = self.eta.scaled(s);
        let e = exp_map(&step);
        let jl_s = left_jacobian(&step) * s;
        let d_lo = e.adjoint() - jl_s * self.jr_inv;
        let d_hi = jl_s * self.jl_inv;
        (e * self.lo.pose, d_lo, d_hi)
    }
}

/// Metric point-to-plane distance (unweighted) for a correspondence.
pub fn pt2pl_error(seg: &SegmentInterpolant, c: &Correspondence) -> Result<f64> {
    let s = seg.fraction(c.point.stamp)?;
    let w = seg.pose_at(s).transform_point(&c.point.position);
    Ok(c.plane.normal.dot(&(w - c.plane.anchor)))
}

/// Weighted point-to-plane residual `sqrt(weight) * n^T (T(t) p - q)` and its
/// Jacobians with respect to the two bounding nodes.
pub fn pt2pl_residual(
    node_lo: &StampedPose,
    node_hi: &StampedPose,
    c: &Correspondence,
) -> Result<(f64, RowVector6<f64>, RowVector6<f64>)> {
    let seg = SegmentInterpolant::new(node_lo, node_hi)?;
    pt2pl_linearize(&seg, c, c.weight.sqrt())
}

/// Same as [`pt2pl_residual`] with a caller-supplied row scale.
pub fn pt2pl_linearize(
    seg: &SegmentInterpolant,
    c: &Correspondence,
    scale: f64,
) -> Result<(f64, RowVector6<f64>, RowVector6<f64>)> {
    let s = seg.fraction(c.point.stamp)?;
    let (pose, d_lo, d_hi) = seg.pose_and_jacobians(s);
    Ok(pt2pl_linearize_with(&pose, &d_lo, &d_hi, c, scale))
}

/// Point-to-plane linearization given the interpolated pose at the point's
/// stamp and the node-to-pose Jacobians there.
pub fn pt2pl_linearize_with(
    pose: &Pose,
    d_lo: &Matrix6<f64>,
    d_hi: &Matrix6<f64>,
    c: &Correspondence,
    scale: f64,
) -> (f64, RowVector6<f64>, RowVector6<f64>) {
    let w = pose.transform_point(&c.point.position);
    let n = c.plane.normal;
    let r = scale * n.dot(&(w - c.plane.anchor));
    // n^T [I, -hat(w)] = [n^T, (w x n)^T]
    let wn = w.cross(&n);
    let dr = RowVector6::new(n.x, n.y, n.z, wn.x, wn.y, wn.z) * scale;
    (r, dr * d_lo, dr * d_hi)
}

/// Caches the interpolated pose (and optionally its Jacobians) of the last
/// stamp seen. Points of one firing share a stamp, so visiting points in
/// stamp order reuses most evaluations.
pub struct StampMemo<'a> {
    seg: &'a SegmentInterpolant,
    stamp: f64,
    with_jacobians: bool,
    pose: Pose,
    d_lo: Matrix6<f64>,
    d_hi: Matrix6<f64>,
}

impl<'a> StampMemo<'a> {
    pub fn new(seg: &'a SegmentInterpolant, with_jacobians: bool) -> Self {
        Self {
            seg,
            stamp: f64::NAN,
            with_jacobians,
            pose: Pose::identity(),
            d_lo: Matrix6::zeros(),
            d_hi: Matrix6::zeros(),
        }
    }

    fn update(&mut self, stamp: f64) -> Result<()> {
        if stamp != self.stamp {
            let s = self.seg.fraction(stamp)?;
            if self.with_jacobians {
                (self.pose, self.d_lo, self.d_hi) = self.seg.pose_and_jacobians(s);
            } else {
                self.pose = self.seg.pose_at(s);
            }
            self.stamp = stamp;
        }
        Ok(())
    }

    pub fn pose(&mut self, stamp: f64) -> Result<&Pose> {
        self.update(stamp)?;
        Ok(&self.pose)
    }

    /// Requires a memo built with Jacobians.
    pub fn linearize(&mut self, c: &Correspondence, scale: f64) -> Result<(f64, RowVector6<f64>, RowVector6<f64>)> {
        debug_assert!(self.with_jacobians);
        self.update(c.point.stamp)?;
        Ok(pt2pl_linearize_with(&self.pose, &self.d_lo, &self.d_hi, c, scale))
    }
}

/// Constant-velocity residual over three consecutive nodes,
/// `Log(T_mid^-1 T_next) - gamma * Log(T_prev^-1 T_mid)` with
/// `gamma = (t_next - t_mid) / (t_mid - t_prev)`, scaled row-wise by
/// `sqrt_info`. Returns the residual and the Jacobians for prev, mid, next.
pub fn velocity_residual(
    prev: &StampedPose,
    mid: &StampedPose,
    next: &StampedPose,
    sqrt_info: &Vector6<f64>,
) -> Result<(Vector6<f64>, [Matrix6<f64>; 3])> {
    let gamma = (next.stamp - mid.stamp) / (mid.stamp - prev.stamp);
    let a = log_map(&(mid.pose.inverse() * next.pose))?;
    let b = log_map(&(prev.pose.inverse() * mid.pose))?;
    let r = a.to_vector() - b.to_vector() * gamma;

    let ja = right_jacobian_inv(&a) * next.pose.inverse().adjoint();
    let jb = right_jacobian_inv(&b) * mid.pose.inverse().adjoint();
    let w = Matrix6::from_diagonal(sqrt_info);
    let j_prev = w * jb * gamma;
    let j_mid = -(w * ja) - w * jb * gamma;
    let j_next = w * ja;
    Ok((w * r, [j_prev, j_mid, j_next]))
}

/// Soft lock of selected body-frame tangent directions of a node to a target
/// pose. Each row of `directions` is a unit 6-vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionLock {
    pub node_id: u64,
    pub target: Pose,
    pub directions: Vec<Vector6<f64>>,
    pub weight: f64,
}

impl DirectionLock {
    /// Residuals `sqrt(weight) * d^T Log(target^-1 T)` and their Jacobians.
    pub fn linearize(&self, pose: &Pose) -> Result<Vec<(f64, RowVector6<f64>)>> {
        let e = log_map(&(self.target.inverse() * *pose))?;
        let j = right_jacobian_inv(&e) * pose.inverse().adjoint();
        let sw = self.weight.sqrt();
        let ev = e.to_vector();
        Ok(self
            .directions
            .iter()
            .map(|d| (sw * d.dot(&ev), sw * d.transpose() * j))
            .collect())
    }
}

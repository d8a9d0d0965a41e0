//! Rigid-body algebra on SE(3) and its tangent space.
//!
//! Tangent vectors are ordered `(rho, phi)`: translational part first,
//! rotational part second. Perturbations are applied on the left,
//! `T <- Exp(delta) * T`, unless a function says otherwise.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix6, Rotation3, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

/// Below this rotation angle `exp_map` switches to its series expansion.
pub const SMALL_ANGLE: f64 = 1e-7;

/// `log_map` refuses rotations whose angle is within this margin of pi.
pub const NEAR_PI_MARGIN: f64 = 1e-6;

// Series thresholds for the Jacobian coefficients, which cancel badly
// well before SMALL_ANGLE.
const SERIES_ANGLE: f64 = 1e-2;

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rigid transform with an orthonormal rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from a rotation matrix that the caller guarantees is
    /// orthonormal with determinant +1.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        debug_assert!(
            (rotation.transpose() * rotation - Matrix3::identity()).amax() < 1e-6,
            "rotation is not orthonormal"
        );
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: exp_so3(&axis_angle),
            translation,
        }
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Maps tangent vectors in this pose's body frame to the world frame:
    /// `T * Exp(x) = Exp(Ad_T x) * T`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let mut ad = Matrix6::zeros();
        let r = self.rotation;
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(hat(&self.translation) * r));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad
    }

    /// Applies a left perturbation `Exp(delta) * self` and re-orthonormalizes
    /// the rotation.
    pub fn left_perturbed(&self, delta: &Vector6<f64>) -> Self {
        let mut out = exp_map(&Twist::from_vector(delta)) * *self;
        out.rotation = orthonormalize(&out.rotation);
        out
    }

    /// Largest absolute deviation of `R^T R` from the identity.
    pub fn orthogonality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        *self * *rhs
    }
}

/// Element of se(3).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            rho: v.fixed_rows::<3>(0).into_owned(),
            phi: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.rho);
        v.fixed_rows_mut::<3>(3).copy_from(&self.phi);
        v
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rho: self.rho * s,
            phi: self.phi * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(self.phi.iter()).all(|x| x.is_finite())
    }
}

/// A control node: pose at an absolute time in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StampedPose {
    pub pose: Pose,
    pub stamp: f64,
}

impl StampedPose {
    pub fn new(pose: Pose, stamp: f64) -> Self {
        Self { pose, stamp }
    }
}

fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let w = vee(&(r - r.transpose())) * 0.5;
    let cos = 0.5 * (r.trace() - 1.0);
    w.norm().atan2(cos)
}

/// Re-orthonormalizes a nearly orthonormal matrix (Gram-Schmidt on columns).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x = r.column(0).normalize();
    let y = r.column(1) - x * x.dot(&r.column(1));
    let y = y.normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

pub fn exp_so3(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let (a, b) = (theta.sin() / theta, half_cos_coeff(theta));
    Matrix3::identity() + a * k + b * k * k
}

/// Rotation vector of `r`. Errors when the angle is within
/// [`NEAR_PI_MARGIN`] of pi.
pub fn log_so3(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let w = vee(&(r - r.transpose())) * 0.5;
    let sin = w.norm();
    let cos = 0.5 * (r.trace() - 1.0);
    let theta = sin.atan2(cos);
    if theta >= std::f64::consts::PI - NEAR_PI_MARGIN {
        return Err(Error::AngleNearPi { angle: theta });
    }
    if theta < SMALL_ANGLE {
        // theta / sin(theta) ~ 1 + theta^2 / 6
        return Ok(w * (1.0 + theta * theta / 6.0));
    }
    Ok(w * (theta / sin))
}

// (1 - cos t) / t^2, written without cancellation.
fn half_cos_coeff(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        return 0.5;
    }
    let s = (0.5 * theta).sin();
    2.0 * s * s / (theta * theta)
}

// (t - sin t) / t^3
fn sin_residual_coeff(theta: f64) -> f64 {
    if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    }
    (theta - theta.sin()) / (theta * theta * theta)
}

/// Left Jacobian of SO(3).
pub fn left_jacobian_so3(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    Matrix3::identity() + half_cos_coeff(theta) * k + sin_residual_coeff(theta) * k * k
}

/// Inverse of the left Jacobian of SO(3).
pub fn left_jacobian_so3_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    let c = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() - 0.5 * k + c * k * k
}

// Coupling block of the SE(3) left Jacobian.
fn q_block(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let rx = hat(rho);
    let px = hat(phi);
    let (c1, c2, c3) = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        (
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
            1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0,
            1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let prp = px * rx * px;
    0.5 * rx + c1 * (px * rx + rx * px + prp) + c2 * (px * px * rx + rx * px * px - 3.0 * prp)
        + c3 * (prp * px + px * prp)
}

/// Left Jacobian of SE(3): `Exp(xi + d) ~ Exp(J_l(xi) d) * Exp(xi)`.
pub fn left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let jl = left_jacobian_so3(&xi.phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
    out.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&q_block(&xi.rho, &xi.phi));
    out
}

/// Inverse of the SE(3) left Jacobian.
pub fn left_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let jinv = left_jacobian_so3_inv(&xi.phi);
    let q = q_block(&xi.rho, &xi.phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-jinv * q * jinv));
    out
}

/// Inverse of the SE(3) right Jacobian: `Log(Exp(xi) Exp(d)) ~ xi + J_r^-1(xi) d`.
pub fn right_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    left_jacobian_inv(&xi.scaled(-1.0))
}

/// SE(3) exponential.
pub fn exp_map(xi: &Twist) -> Pose {
    let rotation = exp_so3(&xi.phi);
    let translation = left_jacobian_so3(&xi.phi) * xi.rho;
    Pose {
        rotation,
        translation,
    }
}

/// SE(3) logarithm on the canonical branch (rotation angle below pi).
pub fn log_map(t: &Pose) -> Result<Twist> {
    let phi = log_so3(&t.rotation)?;
    let rho = left_jacobian_so3_inv(&phi) * t.translation;
    Ok(Twist { rho, phi })
}

/// Geodesic interpolation `T_a * Exp(s * Log(T_a^-1 T_b))`.
pub fn interpolate_pose(t_a: &Pose, t_b: &Pose, s: f64) -> Result<Pose> {
    let xi = log_map(&(t_a.inverse() * *t_b))?;
    Ok(*t_a * exp_map(&xi.scaled(s)))
}

// Stamps this close outside a segment are rounding noise of the node grid.
const STAMP_EPS: f64 = 1e-9;

/// Position of `t` inside `[t_a, t_b]` as a fraction in `[0, 1]`.
pub fn timestamp_fraction(t: f64, t_a: f64, t_b: f64) -> Result<f64> {
    if !(t_a < t_b) || t < t_a - STAMP_EPS || t > t_b + STAMP_EPS {
        return Err(Error::OutOfSegment { t, t_a, t_b });
    }
    Ok(((t - t_a) / (t_b - t_a)).clamp(0.0, 1.0))
}

/// Pose on the piecewise-geodesic trajectory through `a` and `b` at time `t`.
/// `t` may lie outside `[a.stamp, b.stamp]`, in which case the segment's
/// constant velocity is extrapolated.
pub fn extrapolate(a: &StampedPose, b: &StampedPose, t: f64) -> Result<Pose> {
    let xi = log_map(&(a.pose.inverse() * b.pose))?;
    let s = (t - a.stamp) / (b.stamp - a.stamp);
    Ok(a.pose * exp_map(&xi.scaled(s)))
}

//! Principal-component pre-assessment of consecutive scans.
//!
//! A sharp change in the scan's principal directions signals aggressive
//! rotation, and the control-node interval is shortened for that scan.
//! Changes that come with a large eigenvalue change are attributed to the
//! environment instead and ignored.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen3;

// lambda_1 below this fraction of lambda_2 means the cloud is a line or a point.
const COLLINEAR_RATIO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcaSummary {
    pub mean: Vector3<f64>,
    /// Unnormalized scatter eigenvalues, ascending.
    pub eigenvalues: Vector3<f64>,
    /// Column `i` is the unit eigenvector of `eigenvalues[i]`.
    pub eigenvectors: Matrix3<f64>,
}

impl PcaSummary {
    pub fn direction(&self, i: usize) -> Vector3<f64> {
        self.eigenvectors.column(i).into_owned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Reduce,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssessDecision {
    pub verdict: Verdict,
    /// Largest principal-direction change after filtering, degrees.
    pub phi_max: f64,
    /// Largest relative eigenvalue growth.
    pub v_max: f64,
}

/// Centroid and eigenstructure of the scatter matrix `sum (p - m)(p - m)^T`.
pub fn summarize_cloud(points: &[Vector3<f64>]) -> Result<PcaSummary> {
    if points.len() < 4 {
        return Err(Error::DegenerateCloud);
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    });
    let (eigenvalues, eigenvectors) = sym_eigen3(&scatter);
    if !(eigenvalues[2] > 0.0) || eigenvalues[1] < COLLINEAR_RATIO * eigenvalues[2] {
        return Err(Error::DegenerateCloud);
    }
    Ok(PcaSummary {
        mean,
        eigenvalues: eigenvalues.map(|x| x.max(0.0)),
        eigenvectors,
    })
}

/// Angle in degrees between rank-matched principal directions, immune to
/// eigenvector sign flips.
pub fn direction_change(curr: &PcaSummary, last: &PcaSummary) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let c = curr.direction(i).dot(&last.direction(i)).abs().min(1.0);
        c.acos().to_degrees()
    })
}

/// `max_i (lambda_i^curr / lambda_i^last - 1)`, signed.
pub fn eigenvalue_change(curr: &PcaSummary, last: &PcaSummary) -> Result<f64> {
    let mut v_max = f64::NEG_INFINITY;
    for i in 0..3 {
        let l = last.eigenvalues[i];
        if !(l > 0.0) {
            return Err(Error::ZeroEigenvalue { index: i, value: l });
        }
        v_max = v_max.max(curr.eigenvalues[i] / l - 1.0);
    }
    Ok(v_max)
}

/// Reduce the interval when the eigenvalues are stable (`v_max < k_val`)
/// and some principal direction turned by more than `k_vec` degrees.
pub fn assess(
    curr: &PcaSummary,
    last: &PcaSummary,
    k_vec: f64,
    k_val: f64,
) -> Result<AssessDecision> {
    let v_max = eigenvalue_change(curr, last)?;
    if v_max >= k_val {
        return Ok(AssessDecision {
            verdict: Verdict::Keep,
            phi_max: 0.0,
            v_max,
        });
    }
    let phi_max = direction_change(curr, last).max();
    let verdict = if phi_max > k_vec {
        Verdict::Reduce
    } else {
        Verdict::Keep
    };
    Ok(AssessDecision {
        verdict,
        phi_max,
        v_max,
    })
}

//! Per-direction localizability of the newest segment and the reaction
//! policy built on it.
//!
//! Each matched point contributes a unit normal (translational information)
//! and a unit torque `p x n` (rotational information), both in the newest
//! node's body frame. Their absolute projections onto the principal
//! directions of the node's Hessian block are counted against two
//! contribution thresholds, and the counts decide the level.

use nalgebra::{Dyn, Matrix3, Matrix6, OMatrix, Vector3, Vector6, U3};

use crate::linalg::sym_eigen3;
use crate::optimizer::{tangent_direction, Correspondence};
use crate::se3::Pose;

/// `n x 3` matrix, one information element per row.
pub type Rows3 = OMatrix<f64, Dyn, U3>;

// Torques shorter than this carry no rotational information.
const MIN_TORQUE: f64 = 1e-9;
// Slack when comparing merged spans against the cap.
const SPAN_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct InfoMatrices {
    pub f_t: Rows3,
    pub f_r: Rows3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContributionMatrices {
    pub i_t: Rows3,
    pub i_r: Rows3,
    pub v_t: Matrix3<f64>,
    pub v_r: Matrix3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Localizable,
    PartiallyLocalizable,
    NonLocalizable,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Localizable => "L",
            Level::PartiallyLocalizable => "P",
            Level::NonLocalizable => "N",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    /// Contribution counted as strong (`l_s`).
    pub c_strong: f64,
    /// Contribution counted as contributing (`l_c`).
    pub c_contrib: f64,
    pub kappa: [usize; 3],
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            c_strong: 0.9,
            c_contrib: 0.5,
            kappa: [125, 50, 15],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirectionClass {
    pub level: Level,
    pub l_s: usize,
    pub l_c: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizabilityReport {
    /// Translational directions, columns of `v_t` in order.
    pub translation: [DirectionClass; 3],
    /// Rotational directions, columns of `v_r` in order.
    pub rotation: [DirectionClass; 3],
    pub v_t: Matrix3<f64>,
    pub v_r: Matrix3<f64>,
}

impl LocalizabilityReport {
    pub fn any(&self, level: Level) -> bool {
        self.translation.iter().chain(&self.rotation).any(|c| c.level == level)
    }

    /// Body-frame tangent directions classified at `level`.
    pub fn directions_at(&self, level: Level) -> Vec<Vector6<f64>> {
        let t = (0..3)
            .filter(|&i| self.translation[i].level == level)
            .map(|i| tangent_direction(&self.v_t.column(i).into_owned(), false));
        let r = (0..3)
            .filter(|&i| self.rotation[i].level == level)
            .map(|i| tangent_direction(&self.v_r.column(i).into_owned(), true));
        t.chain(r).collect()
    }

    /// Compact `t=LLN r=LPN` rendering for logs.
    pub fn levels_string(&self) -> String {
        let t: String = self.translation.iter().map(|c| c.level.as_str()).collect();
        let r: String = self.rotation.iter().map(|c| c.level.as_str()).collect();
        format!("t={t} r={r}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MgmtAction {
    Proceed,
    HalveVoxel,
    MergeNext,
    /// Body-frame tangent directions to hold at the motion prediction.
    ConstrainDirections(Vec<Vector6<f64>>),
}

impl MgmtAction {
    pub fn kind(&self) -> &'static str {
        match self {
            MgmtAction::Proceed => "proceed",
            MgmtAction::HalveVoxel => "halve_voxel",
            MgmtAction::MergeNext => "merge_next",
            MgmtAction::ConstrainDirections(_) => "constrain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManageLimits {
    /// Longest segment a merge may produce, seconds.
    pub span_cap: f64,
    /// Smallest downsampling cell, meters.
    pub ds_floor: f64,
}

impl Default for ManageLimits {
    fn default() -> Self {
        Self {
            span_cap: 0.1,
            ds_floor: 0.1,
        }
    }
}

fn rows(v: &[Vector3<f64>]) -> Rows3 {
    Rows3::from_fn(v.len(), |i, j| v[i][j])
}

/// Normals and normalized torques from sensor-frame `(point, normal)` pairs.
pub fn build_info_matrices(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> InfoMatrices {
    let normals: Vec<_> = pairs.iter().map(|(_, n)| n.normalize()).collect();
    let torques: Vec<_> = pairs
        .iter()
        .zip(&normals)
        .filter_map(|((p, _), n)| {
            let tau = p.cross(n);
            let norm = tau.norm();
            (norm >= MIN_TORQUE).then(|| tau / norm)
        })
        .collect();
    InfoMatrices {
        f_t: rows(&normals),
        f_r: rows(&torques),
    }
}

/// Points and plane normals of `correspondences` expressed in the frame of
/// `pose`. Each point is placed with `interpolated(stamp)`, its pose on the
/// trajectory.
pub fn sensor_frame_pairs<F>(
    correspondences: &[Correspondence],
    pose: &Pose,
    interpolated: F,
) -> Vec<(Vector3<f64>, Vector3<f64>)>
where
    F: Fn(f64) -> Pose,
{
    let inv = pose.inverse();
    correspondences
        .iter()
        .map(|c| {
            let world = interpolated(c.point.stamp).transform_point(&c.point.position);
            (inv.transform_point(&world), inv.rotation() * c.plane.normal)
        })
        .collect()
}

/// Eigenvector bases (ascending eigenvalue order, sign-canonical columns) of
/// the translational and rotational blocks.
pub fn opt_principal_directions(
    hessian_block_t: &Matrix3<f64>,
    hessian_block_r: &Matrix3<f64>,
) -> (Matrix3<f64>, Matrix3<f64>) {
    (sym_eigen3(hessian_block_t).1, sym_eigen3(hessian_block_r).1)
}

/// `|F * V|` elementwise.
pub fn contribution(f: &Rows3, v: &Matrix3<f64>) -> Rows3 {
    (f * v).abs()
}

pub fn classify_direction(column: &[f64], th: &Thresholds) -> DirectionClass {
    let l_s = column.iter().filter(|&&c| c >= th.c_strong).count();
    let l_c = column.iter().filter(|&&c| c >= th.c_contrib).count();
    let [k1, k2, k3] = th.kappa;
    let level = if l_c >= k1 || l_s >= k2 {
        Level::Localizable
    } else if l_s >= k3 {
        Level::PartiallyLocalizable
    } else {
        Level::NonLocalizable
    };
    DirectionClass { level, l_s, l_c }
}

pub fn contribution_matrices(info: &InfoMatrices, hessian_block: &Matrix6<f64>) -> ContributionMatrices {
    let h_t = hessian_block.fixed_view::<3, 3>(0, 0).into_owned();
    let h_r = hessian_block.fixed_view::<3, 3>(3, 3).into_owned();
    let (v_t, v_r) = opt_principal_directions(&h_t, &h_r);
    ContributionMatrices {
        i_t: contribution(&info.f_t, &v_t),
        i_r: contribution(&info.f_r, &v_r),
        v_t,
        v_r,
    }
}

/// Classifies all six directions. `hessian_block` must be in the same body
/// frame as the information rows, translation first.
pub fn localizability(info: &InfoMatrices, hessian_block: &Matrix6<f64>, th: &Thresholds) -> LocalizabilityReport {
    let c = contribution_matrices(info, hessian_block);
    let classify = |m: &Rows3, j: usize| {
        let col: Vec<f64> = m.column(j).iter().copied().collect();
        classify_direction(&col, th)
    };
    LocalizabilityReport {
        translation: [0, 1, 2].map(|j| classify(&c.i_t, j)),
        rotation: [0, 1, 2].map(|j| classify(&c.i_r, j)),
        v_t: c.v_t,
        v_r: c.v_r,
    }
}

/// Reaction to a report. `next_span` is the span of the segment a merge
/// would absorb.
pub fn manage(
    report: &LocalizabilityReport,
    ds: f64,
    seg_span: f64,
    next_span: f64,
    limits: &ManageLimits,
) -> MgmtAction {
    if report.any(Level::NonLocalizable) {
        if seg_span + next_span <= limits.span_cap + SPAN_EPS {
            MgmtAction::MergeNext
        } else {
            MgmtAction::ConstrainDirections(report.directions_at(Level::NonLocalizable))
        }
    } else if report.any(Level::PartiallyLocalizable) && ds / 2.0 >= limits.ds_floor - SPAN_EPS {
        MgmtAction::HalveVoxel
    } else {
        MgmtAction::Proceed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(level: Level) -> LocalizabilityReport {
        let c = DirectionClass { level, l_s: 0, l_c: 0 };
        LocalizabilityReport {
            translation: [c; 3],
            rotation: [c; 3],
            v_t: Matrix3::identity(),
            v_r: Matrix3::identity(),
        }
    }

    #[test]
    fn plane_rows_are_normals_and_in_plane_torques() {
        let pairs: Vec<_> = [(1.0, 0.0), (0.0, 2.0), (-1.0, 1.0)]
            .iter()
            .map(|&(x, y)| (Vector3::new(x, y, 1.0), Vector3::z()))
            .collect();
        let info = build_info_matrices(&pairs);
        for i in 0..3 {
            assert_eq!(info.f_t.row(i).transpose(), Vector3::z());
            assert!(info.f_r[(i, 2)].abs() < 1e-15);
            assert!((info.f_r.row(i).norm() - 1.0).abs() < 1e-12);
        }
        // (1,0,1) x (0,0,1) = (0,-1,0)
        assert!((info.f_r.row(0).transpose() - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn point_along_normal_has_no_torque_row() {
        let info = build_info_matrices(&[(Vector3::new(0.0, 0.0, 3.0), Vector3::z())]);
        assert_eq!(info.f_t.nrows(), 1);
        assert_eq!(info.f_r.nrows(), 0);
        let empty = build_info_matrices(&[]);
        assert_eq!((empty.f_t.nrows(), empty.f_r.nrows()), (0, 0));
    }

    #[test]
    fn weakest_direction_of_diagonal_block() {
        let (v_t, _) = opt_principal_directions(
            &Matrix3::from_diagonal(&Vector3::new(100.0, 100.0, 0.01)),
            &Matrix3::identity(),
        );
        assert_eq!(v_t.column(0).into_owned(), Vector3::z());
    }

    #[test]
    fn contribution_follows_rotated_basis() {
        let f = rows(&[Vector3::x(), Vector3::x()]);
        let i = contribution(&f, &Matrix3::identity());
        assert_eq!(i.column(0).sum(), 2.0);
        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let i = contribution(&f, &rz);
        assert!(i.column(0).amax() < 1e-15);
        assert_eq!(i.column(1).sum(), 2.0);
    }

    #[test]
    fn classification_rule() {
        let th = Thresholds::default();
        let c = classify_direction(&[0.95; 200], &th);
        assert_eq!((c.level, c.l_s, c.l_c), (Level::Localizable, 200, 200));
        let mut col = vec![0.01; 180];
        col.extend([0.95; 20]);
        assert_eq!(classify_direction(&col, &th).level, Level::PartiallyLocalizable);
        assert_eq!(classify_direction(&[0.0; 300], &th).level, Level::NonLocalizable);
    }

    #[test]
    fn manage_policy() {
        let lim = ManageLimits::default();
        assert_eq!(manage(&uniform(Level::Localizable), 0.5, 0.04, 0.04, &lim), MgmtAction::Proceed);
        let non = uniform(Level::NonLocalizable);
        assert_eq!(manage(&non, 0.5, 0.04, 0.04, &lim), MgmtAction::MergeNext);
        assert!(matches!(
            manage(&non, 0.5, 0.1, 0.04, &lim),
            MgmtAction::ConstrainDirections(d) if d.len() == 6
        ));
        let part = uniform(Level::PartiallyLocalizable);
        assert_eq!(manage(&part, 0.5, 0.04, 0.04, &lim), MgmtAction::HalveVoxel);
        assert_eq!(manage(&part, 0.15, 0.04, 0.04, &lim), MgmtAction::Proceed);
    }
}

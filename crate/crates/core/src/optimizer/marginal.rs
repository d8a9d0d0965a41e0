use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::sym_eigen;
use crate::optimizer::normal::NODE_DOF;
use crate::se3::{log_map, Pose};

// Eigenvalues of H below this fraction of the largest are treated as zero
// when forming the square-root prior.
const RANK_TOL: f64 = 1e-12;

/// Quadratic energy `1/2 dx^T H dx + b^T dx` on a set of retained nodes,
/// where `dx_i = Log(T_i * (T_i^0)^-1)` is measured from the frozen
/// linearization poses. It is stored and applied as the square-root factor
/// `r(dx) = J dx + r0` with `J^T J = H`, `J^T r0 = b`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalPrior {
    pub node_ids: Vec<u64>,
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lin_points: Vec<Pose>,
    sqrt_jacobian: DMatrix<f64>,
    sqrt_residual: DVector<f64>,
}

impl Default for MarginalPrior {
    fn default() -> Self {
        Self::empty()
    }
}

impl MarginalPrior {
    pub fn empty() -> Self {
        Self {
            node_ids: Vec::new(),
            h: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            lin_points: Vec::new(),
            sqrt_jacobian: DMatrix::zeros(0, 0),
            sqrt_residual: DVector::zeros(0),
        }
    }

    pub fn new(node_ids: Vec<u64>, h: DMatrix<f64>, b: DVector<f64>, lin_points: Vec<Pose>) -> Self {
        assert_eq!(h.nrows(), node_ids.len() * NODE_DOF);
        assert_eq!(lin_points.len(), node_ids.len());
        let (values, vectors) = sym_eigen(&h);
        let top = values.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..values.len())
            .filter(|&i| values[i] > RANK_TOL * top.max(f64::MIN_POSITIVE))
            .collect();
        let mut jac = DMatrix::zeros(keep.len(), h.ncols());
        let mut res = DVector::zeros(keep.len());
        for (row, &i) in keep.iter().enumerate() {
            let s = values[i].sqrt();
            let v = vectors.column(i);
            jac.row_mut(row).copy_from(&(v.transpose() * s));
            res[row] = v.dot(&b) / s;
        }
        Self {
            node_ids,
            h,
            b,
            lin_points,
            sqrt_jacobian: jac,
            sqrt_residual: res,
        }
    }

    /// Isotropic prior holding one node at `pose`.
    pub fn anchor(node_id: u64, pose: Pose, information: f64) -> Self {
        Self::new(
            vec![node_id],
            DMatrix::identity(NODE_DOF, NODE_DOF) * information,
            DVector::zeros(NODE_DOF),
            vec![pose],
        )
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn contains(&self, node_id: u64) -> bool {
        self.node_ids.contains(&node_id)
    }

    pub fn sqrt_jacobian(&self) -> &DMatrix<f64> {
        &self.sqrt_jacobian
    }

    /// Stacked tangent offsets of `poses` (ordered like `node_ids`) from the
    /// linearization point.
    pub fn deltas(&self, poses: &[Pose]) -> Result<DVector<f64>> {
        let mut dx = DVector::zeros(self.node_ids.len() * NODE_DOF);
        for (i, (p, p0)) in poses.iter().zip(&self.lin_points).enumerate() {
            let d = log_map(&(*p * p0.inverse()))?.to_vector();
            dx.fixed_rows_mut::<NODE_DOF>(i * NODE_DOF).copy_from(&d);
        }
        Ok(dx)
    }

    /// Square-root residual at offset `dx`. The Jacobian with respect to
    /// node perturbations is [`Self::sqrt_jacobian`] (first-estimate).
    pub fn residual(&self, dx: &DVector<f64>) -> DVector<f64> {
        &self.sqrt_jacobian * dx + &self.sqrt_residual
    }

    pub fn cost(&self, dx: &DVector<f64>) -> f64 {
        0.5 * self.residual(dx).norm_squared()
    }
}

//! Dense Gauss-Newton normal equations over 6-DoF node blocks.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix6, RowVector6, SMatrix, SVector, Vector6};

use crate::error::{Error, Result};

pub const NODE_DOF: usize = 6;

/// `H = sum J^T J`, `b = sum J^T r` and `cost = 1/2 sum |r|^2` (or the robust
/// equivalent supplied by the caller).
#[derive(Clone, Debug, PartialEq)]
pub struct NormalEquations {
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cost: f64,
}

impl NormalEquations {
    pub fn new(num_nodes: usize) -> Self {
        let n = num_nodes * NODE_DOF;
        Self {
            h: DMatrix::zeros(n, n),
            b: DVector::zeros(n),
            cost: 0.0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.b.len() / NODE_DOF
    }

    /// Adds one scalar row given per-node Jacobian blocks. The cost is not
    /// touched.
    pub fn add_scalar(&mut self, blocks: &[(usize, RowVector6<f64>)], r: f64) {
        for &(i, ji) in blocks {
            let oi = i * NODE_DOF;
            let mut bi = self.b.fixed_rows_mut::<NODE_DOF>(oi);
            bi += ji.transpose() * r;
            for &(j, jj) in blocks {
                let oj = j * NODE_DOF;
                let mut hij = self.h.fixed_view_mut::<NODE_DOF, NODE_DOF>(oi, oj);
                hij += ji.transpose() * jj;
            }
        }
    }

    /// Adds a six-row residual block. The cost is not touched.
    pub fn add_block(&mut self, blocks: &[(usize, Matrix6<f64>)], r: &Vector6<f64>) {
        for &(i, ji) in blocks {
            let oi = i * NODE_DOF;
            let jt = ji.transpose();
            let mut bi = self.b.fixed_rows_mut::<NODE_DOF>(oi);
            bi += jt * r;
            for &(j, jj) in blocks {
                let oj = j * NODE_DOF;
                let mut hij = self.h.fixed_view_mut::<NODE_DOF, NODE_DOF>(oi, oj);
                hij += jt * jj;
            }
        }
    }

    /// Adds a dense factor whose Jacobian columns are laid out as consecutive
    /// 6-blocks for the nodes in `slots`.
    pub fn add_dense(&mut self, slots: &[usize], jac: &DMatrix<f64>, r: &DVector<f64>) {
        debug_assert_eq!(jac.ncols(), slots.len() * NODE_DOF);
        let jtj = jac.transpose() * jac;
        let jtr = jac.transpose() * r;
        for (a, &i) in slots.iter().enumerate() {
            let mut bi = self.b.fixed_rows_mut::<NODE_DOF>(i * NODE_DOF);
            bi += jtr.fixed_rows::<NODE_DOF>(a * NODE_DOF);
            for (c, &j) in slots.iter().enumerate() {
                let mut hij = self
                    .h
                    .fixed_view_mut::<NODE_DOF, NODE_DOF>(i * NODE_DOF, j * NODE_DOF);
                hij += jtj.fixed_view::<NODE_DOF, NODE_DOF>(a * NODE_DOF, c * NODE_DOF);
            }
        }
    }

    /// Adds a 12x12 system over the consecutive nodes `i` and `i + 1`.
    pub fn add_pair(&mut self, i: usize, h: &SMatrix<f64, 12, 12>, b: &SVector<f64, 12>) {
        let o = i * NODE_DOF;
        let mut hv = self.h.fixed_view_mut::<12, 12>(o, o);
        hv += h;
        let mut bv = self.b.fixed_rows_mut::<12>(o);
        bv += b;
    }

    pub fn node_block(&self, i: usize) -> Matrix6<f64> {
        self.h
            .fixed_view::<NODE_DOF, NODE_DOF>(i * NODE_DOF, i * NODE_DOF)
            .into_owned()
    }

    /// Solves `(H + lambda * D) x = -b` with `D = diag(max(diag(H), floor))`.
    /// Returns `None` when the damped matrix is not positive definite.
    pub fn solve_damped(&self, lambda: f64, floor: f64) -> Option<DVector<f64>> {
        let mut a = self.h.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda * self.h[(i, i)].max(floor);
        }
        let chol = Cholesky::new(a)?;
        let x = chol.solve(&(-&self.b));
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// Eliminates the first `dropped` variables of `(h, b)`:
/// `H~ = H_rr - H_rd H_dd^-1 H_dr`, `b~ = b_r - H_rd H_dd^-1 b_d`.
/// `H_dd` is regularized with `eps * I` before factorization.
pub fn schur_complement(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    dropped: usize,
    eps: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = h.nrows();
    let kept = n - dropped;
    let mut hdd = h.view((0, 0), (dropped, dropped)).into_owned();
    for i in 0..dropped {
        hdd[(i, i)] += eps;
    }
    let hdd = 0.5 * (&hdd + hdd.transpose());
    let chol = Cholesky::new(hdd).ok_or(Error::SingularBlock)?;
    let hrd = h.view((dropped, 0), (kept, dropped));
    let hrr = h.view((dropped, dropped), (kept, kept));
    let bd = b.rows(0, dropped);
    let br = b.rows(dropped, kept);

    let hdd_inv_hdr = chol.solve(&hrd.transpose());
    let hdd_inv_bd = chol.solve(&bd.into_owned());
    let h_marg = hrr - hrd * hdd_inv_hdr;
    let b_marg = br - hrd * hdd_inv_bd;
    let h_marg = 0.5 * (&h_marg + h_marg.transpose());
    if !h_marg.iter().chain(b_marg.iter()).all(|v| v.is_finite()) {
        return Err(Error::SingularBlock);
    }
    Ok((h_marg, b_marg))
}

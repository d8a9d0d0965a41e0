use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};

/// Flips `v` so that its largest-magnitude component is positive.
pub fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        -v
    } else {
        v
    }
}

/// Eigen-decomposition of a symmetric 3x3 matrix with eigenvalues sorted
/// ascending. Columns of the returned matrix are the matching unit
/// eigenvectors, sign-canonicalized.
pub fn sym_eigen3(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector3::new(
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let cols: Vec<Vector3<f64>> = order
        .iter()
        .map(|&i| canonical_sign(eig.eigenvectors.column(i).normalize()))
        .collect();
    (values, Matrix3::from_columns(&cols))
}

/// Symmetric eigen-decomposition of a dense matrix (unsorted).
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    (eig.eigenvalues, eig.eigenvectors)
}

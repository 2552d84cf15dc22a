//! Small dense linear-algebra helpers shared by the estimation modules.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root `S^{1/2}` and inverse root `S^{-1/2}` of an SPD matrix.
pub fn sym_sqrt_and_inv(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (vals, vecs) = sorted_symmetric_eigen(s);
    let max = vals.first().copied().unwrap_or(0.0);
    if !(max > 0.0) || vals.iter().any(|&v| !(v > max * 1e-14)) {
        return Err(Error::Covariance(format!(
            "matrix is not positive definite (eigenvalues {vals:?})"
        )));
    }
    let n = vals.len();
    let root = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        vals.iter().map(|v| v.sqrt()),
    ));
    let inv_root = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        vals.iter().map(|v| 1.0 / v.sqrt()),
    ));
    Ok((
        &vecs * root * vecs.transpose(),
        &vecs * inv_root * vecs.transpose(),
    ))
}

/// Moore-Penrose inverse of a symmetric PSD matrix.
///
/// Eigenvalues below `rel_tol * max_eigenvalue` are treated as zero. Returns
/// the inverse together with the number of retained eigenvalues.
pub fn pinv_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize, f64) {
    let (vals, vecs) = sorted_symmetric_eigen(m);
    let max = vals.first().copied().unwrap_or(0.0).max(0.0);
    let n = vals.len();
    let mut inv = DMatrix::zeros(n, n);
    let mut kept = 0;
    for (i, &v) in vals.iter().enumerate() {
        if max > 0.0 && v > rel_tol * max {
            let col = vecs.column(i);
            inv += (col * col.transpose()) / v;
            kept += 1;
        }
    }
    (inv, kept, max)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Extends the orthonormal columns of `q` (`m x k`) to a full `m x m`
/// orthonormal basis by Gram-Schmidt against the canonical vectors.
pub fn complete_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let m = q.nrows();
    let mut cols: Vec<nalgebra::DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while cols.len() < m && e < m {
        let mut v = nalgebra::DVector::zeros(m);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v -= c * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / norm);
        }
        e += 1;
    }
    DMatrix::from_columns(&cols)
}

/// Makes the first entry with magnitude above `1e-12` in each column positive.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        if let Some(&first) = col.iter().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_roundtrip() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (r, ir) = sym_sqrt_and_inv(&s).unwrap();
        assert!((&r * &r - &s).abs().max() < 1e-12);
        assert!((&r * &ir - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!((&r - r.transpose()).abs().max() < 1e-14);
    }

    #[test]
    fn sqrt_rejects_singular() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(sym_sqrt_and_inv(&s).is_err());
    }

    #[test]
    fn completed_basis_is_orthonormal() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0 / 3f64.sqrt(); 3]);
        let b = complete_basis(&v);
        assert_eq!(b.shape(), (3, 3));
        assert!((b.transpose() * &b - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        assert!((b.column(0) - v.column(0)).abs().max() < 1e-15);
    }

    #[test]
    fn pinv_drops_null_directions() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 0.0]));
        let (p, kept, _) = pinv_symmetric(&m, 1e-10);
        assert_eq!(kept, 2);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-14);
        assert!((p[(1, 1)] - 1.0).abs() < 1e-14);
        assert_eq!(p[(2, 2)], 0.0);
    }
}

//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Symmetric eigendecomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct Eigen<T: Real> {
    pub values: DVector<T>,
    /// Eigenvectors as columns, aligned with `values`.
    pub vectors: DMatrix<T>,
}

impl<T: Real> Eigen<T> {
    pub fn new(m: &DMatrix<T>) -> Self {
        let sym = symmetrize(m);
        let eig = SymmetricEigen::new(sym);
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            fix_sign(&mut col);
            vectors.set_column(dst, &col);
        }
        Eigen { values, vectors }
    }

    /// Number of eigenvalues above `rel_tol` times the largest one.
    pub fn rank(&self, rel_tol: T) -> usize {
        let top = self.values.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        if top <= T::zero() {
            return 0;
        }
        self.values.iter().filter(|&&v| v > top * rel_tol).count()
    }
}

/// Flips `v` so its largest-magnitude entry is positive.
pub fn fix_sign<T: Real>(v: &mut DVector<T>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < T::zero() {
        v.neg_mut();
    }
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// `log det` of a symmetric positive definite matrix, `None` if the Cholesky
/// factorization fails.
pub fn logdet_spd<T: Real>(m: &DMatrix<T>) -> Option<T> {
    if m.nrows() == 0 {
        return Some(T::zero());
    }
    let chol = symmetrize(m).cholesky()?;
    let l = chol.l_dirty();
    let mut acc = T::zero();
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if d <= T::zero() {
            return None;
        }
        acc += d.ln();
    }
    Some(lit::<T>(2.0) * acc)
}

pub fn spd_inverse<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    symmetrize(m)
        .cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn spd_solve<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let chol = symmetrize(a)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(chol.solve(b))
}

/// Orthonormal basis of the column space of a square or tall matrix, with
/// the sign convention that makes the triangular factor's diagonal positive.
/// Applied to a Gaussian matrix this gives a Haar-distributed orthonormal
/// frame.
pub fn orthonormalize<T: Real>(a: DMatrix<T>) -> DMatrix<T> {
    let k = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthonormal basis (`p × (p − k)`) of the orthogonal complement of the
/// columns of a semi-orthogonal `p × k` matrix.
pub fn complement_basis<T: Real>(g: &DMatrix<T>) -> DMatrix<T> {
    let p = g.nrows();
    let k = g.ncols();
    let proj = DMatrix::<T>::identity(p, p) - g * g.transpose();
    let eig = Eigen::new(&proj);
    eig.vectors.columns(0, p - k).into_owned()
}

/// Sample covariance `aᵀ b / (n − 1)` of already centered blocks.
pub fn cross_product<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    a.transpose() * b / count::<T>(n - 1)
}

/// Max absolute entrywise difference.
pub fn max_abs_diff<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// `‖aᵀa − I‖_max`.
pub fn orthonormality_defect<T: Real>(a: &DMatrix<T>) -> T {
    let k = a.ncols();
    max_abs_diff(&(a.transpose() * a), &DMatrix::identity(k, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0]);
        let e = Eigen::new(&m);
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 1.0]);
        assert!((e.vectors[(1, 0)] - 1.0_f64).abs() < 1e-14);
    }

    #[test]
    fn logdet_matches_product() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        assert!((logdet_spd(&m).unwrap() - 11.0_f64.ln()).abs() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(logdet_spd(&bad).is_none());
    }

    #[test]
    fn complement_is_orthogonal() {
        let g = orthonormalize(DMatrix::from_fn(5, 2, |i, j| ((i * 3 + j * 7) % 5) as f64 + 0.5));
        let c = complement_basis(&g);
        assert_eq!(c.shape(), (5, 3));
        assert!(orthonormality_defect(&c) < 1e-12);
        assert!((g.transpose() * &c).abs().max() < 1e-12);
    }
}

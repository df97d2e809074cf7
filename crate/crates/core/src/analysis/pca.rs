use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::Eigen;

#[derive(Debug, Clone)]
pub struct PcaSummary {
    /// Centered data times loadings, one column per component.
    pub scores: DMatrix<f64>,
    /// Orthonormal loadings, components as columns, ordered by decreasing
    /// variance.
    pub loadings: DMatrix<f64>,
    pub explained: DVector<f64>,
    pub means: DVector<f64>,
}

/// Principal components of mean-centered (unscaled) data. Each loading
/// column is signed so its largest-magnitude entry is positive.
pub fn pca_scores(data: &DMatrix<f64>) -> Result<PcaSummary> {
    let (n, m) = data.shape();
    if m == 0 || n <= m {
        return Err(invalid!("PCA needs more rows than columns, got {n}x{m}"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("PCA input contains non-finite values"));
    }
    let means = DVector::from_iterator(m, data.column_iter().map(|c| c.mean()));
    let mut centered = data.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let cov = centered.tr_mul(&centered) / (n - 1) as f64;
    let eig = Eigen::new(&cov);
    let values = eig.values.map(|v| v.max(0.0));
    let total = values.sum();
    if !(total > 0.0) {
        return Err(invalid!("PCA input has zero variance"));
    }
    let scores = &centered * &eig.vectors;
    Ok(PcaSummary {
        scores,
        loadings: eig.vectors,
        explained: values / total,
        means,
    })
}

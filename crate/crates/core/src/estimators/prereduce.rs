use nalgebra::DMatrix;

use super::moments::center_columns;
use crate::error::{invalid, Result};
use crate::linalg::fix_sign;
use crate::scalar::{to_f64, Real};

/// Leading principal directions kept for wide data.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis<T: Real> {
    /// `p × q` orthonormal loadings.
    pub loadings: DMatrix<T>,
    pub q: usize,
    pub variance_explained: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrereduceOptions {
    /// Stop adding components once this fraction of the total variance is
    /// reached.
    pub variance_cap: f64,
    /// Never keep fewer than `min(min_components, n − 1, p)` components.
    pub min_components: usize,
}

impl Default for PrereduceOptions {
    fn default() -> Self {
        PrereduceOptions { variance_cap: 0.995, min_components: 10 }
    }
}

/// PCA reduction of wide predictors: returns the basis and the `n × q`
/// scores of the centered data.
pub fn pca_prereduce<T: Real>(x: &DMatrix<T>, opts: &PrereduceOptions) -> Result<(ReducedBasis<T>, DMatrix<T>)> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(invalid!("pre-reduction needs at least two observations"));
    }
    if p <= n {
        return Err(invalid!("pre-reduction applies to wide data only (p = {p}, n = {n})"));
    }
    let (xc, _) = center_columns(x);
    let svd = xc.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let var: Vec<f64> = order.iter().map(|&i| to_f64(svd.singular_values[i]).powi(2)).collect();
    let total: f64 = var.iter().sum();
    let q_max = (n - 1).min(p);
    let mut q = q_max;
    let mut acc = 0.0;
    for (k, v) in var.iter().enumerate().take(q_max) {
        acc += v;
        if total > 0.0 && acc / total >= opts.variance_cap {
            q = k + 1;
            break;
        }
    }
    q = q.max(opts.min_components.min(q_max)).max(1);
    let explained = if total > 0.0 { var[..q].iter().sum::<f64>() / total } else { 1.0 };

    let mut loadings = DMatrix::zeros(p, q);
    for (dst, &src) in order.iter().take(q).enumerate() {
        let mut col = vt.row(src).transpose();
        fix_sign(&mut col);
        loadings.set_column(dst, &col);
    }
    let scores = xc * &loadings;
    Ok((ReducedBasis { loadings, q, variance_explained: explained.min(1.0) }, scores))
}

/// Same reduction applied to second moments directly: keeps the leading
/// eigenvectors of `Sxx` (at most `max_q`) under the same variance rule.
/// Used when population covariance blocks stand in for sample moments.
pub fn prereduce_moments<T: Real>(
    mom: &super::Moments<T>,
    max_q: usize,
    opts: &PrereduceOptions,
) -> (ReducedBasis<T>, super::Moments<T>) {
    let eig = mom.sxx_eigen();
    let var: Vec<f64> = eig.values.iter().map(|&v| to_f64(v).max(0.0)).collect();
    let total: f64 = var.iter().sum();
    let q_max = max_q.min(mom.p()).max(1);
    let mut q = q_max;
    let mut acc = 0.0;
    for (k, v) in var.iter().enumerate().take(q_max) {
        acc += v;
        if total > 0.0 && acc / total >= opts.variance_cap {
            q = k + 1;
            break;
        }
    }
    q = q.max(opts.min_components.min(q_max)).max(1);
    let explained = if total > 0.0 { var[..q].iter().sum::<f64>() / total } else { 1.0 };
    let loadings = eig.vectors.columns(0, q).into_owned();
    let reduced = mom.project(&loadings);
    (ReducedBasis { loadings, q, variance_explained: explained.min(1.0) }, reduced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::moments::{center, Moments};
    use crate::estimators::pcr::pcr_path;
    use crate::linalg::{max_abs_diff, orthonormality_defect};
    use crate::simulation::{assemble_population, sample_dataset, DatasetTag, SimDesign, SimRng};
    use rand::SeedableRng;

    fn wide(p: usize, gamma: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = SimDesign { design_id: 1, p, n: 100, m: 4, gamma, eta: 0.0, relpos: vec![1, 2, 3, 4], r2: 0.8, base_seed: 0 };
        let pop = assemble_population::<f64, _>(&d, &mut SimRng::seed_from_u64(4)).unwrap();
        let tag = DatasetTag { design_id: 1, method: None, replicate: 1, seed: 0 };
        let data = sample_dataset(&pop, 100, tag, &mut SimRng::seed_from_u64(8)).unwrap();
        (data.x, data.y)
    }

    #[test]
    fn rank_and_cap_rules() {
        let (x, _) = wide(250, 0.2);
        let (basis, scores) = pca_prereduce(&x, &PrereduceOptions::default()).unwrap();
        assert!(basis.q <= 99);
        assert!(basis.variance_explained >= 0.995 || basis.q == 99);
        assert!(orthonormality_defect(&basis.loadings) < 1e-10);
        assert_eq!(scores.shape(), (100, basis.q));
    }

    #[test]
    fn floor_keeps_enough_components_for_steep_decay() {
        let (x, _) = wide(250, 0.9);
        let (basis, _) = pca_prereduce(&x, &PrereduceOptions::default()).unwrap();
        assert!(basis.q >= 10);
    }

    #[test]
    fn rejects_tall_data() {
        let x = DMatrix::from_fn(10, 3, |i, j| (i * j) as f64);
        assert!(pca_prereduce(&x, &PrereduceOptions::default()).is_err());
    }

    #[test]
    fn reduced_pcr_matches_direct_pcr() {
        let (x, y) = wide(250, 0.2);
        let opts = PrereduceOptions { variance_cap: 1.0, min_components: 0 };
        let (basis, scores) = pca_prereduce(&x, &opts).unwrap();
        assert_eq!(basis.q, 99);
        let c = center(&x, &y).unwrap();
        let direct = pcr_path(&Moments::from_centered(&c.x, &c.y), 10);
        let reduced = pcr_path(&Moments::from_centered(&scores, &c.y), 10);
        for l in 0..=10 {
            let back = &basis.loadings * &reduced[l].coef;
            assert!(max_abs_diff(&back, &direct[l].coef) < 1e-8, "l={l}");
        }
    }
}

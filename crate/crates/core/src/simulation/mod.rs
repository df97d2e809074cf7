//! Population covariance construction with controlled relevant subspaces,
//! and multivariate-normal sampling from it.

mod dataset;
mod design;
mod population;

pub use dataset::{read_population, sample_dataset, write_dataset_csv, write_population, Dataset, DatasetTag};
pub use design::{
    design_grid, relpos_label, SimDesign, GRID_ETA, GRID_GAMMA, GRID_M, GRID_N, GRID_P, GRID_R2, GRID_RELPOS,
};
pub use population::{assemble_population, PopulationModel};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{invalid, Result};
use crate::linalg::orthonormalize;
use crate::scalar::{count, lit, Real};

/// Deterministic random stream used for every simulation draw.
pub type SimRng = rand_chacha::ChaCha20Rng;

/// `λ_i = exp(−γ (i − 1))`, `i = 1..=p`.
pub fn predictor_eigenvalues<T: Real>(p: usize, gamma: T) -> Result<DVector<T>> {
    decay_eigenvalues(p, gamma, "gamma")
}

/// `κ_j = exp(−η (j − 1))`, `j = 1..=m`.
pub fn response_eigenvalues<T: Real>(m: usize, eta: T) -> Result<DVector<T>> {
    decay_eigenvalues(m, eta, "eta")
}

fn decay_eigenvalues<T: Real>(k: usize, rate: T, name: &str) -> Result<DVector<T>> {
    if k == 0 {
        return Err(invalid!("{name}: dimension must be positive"));
    }
    if !(rate >= T::zero()) || !rate.is_finite() {
        return Err(invalid!("{name} must be finite and >= 0, got {rate:?}"));
    }
    Ok(DVector::from_fn(k, |i, _| (-rate * count::<T>(i)).exp()))
}

/// Latent covariance between the predictor components and the single
/// informative response component.
///
/// Entries outside `relpos` are zero. Inside, raw weights are drawn from
/// `U([-1, -0.1] ∪ [0.1, 1])` and rescaled so that
/// `Σ σ_i² / (λ_i κ₁) = r2` holds exactly.
pub fn latent_cross_covariance<T: Real, R: Rng + ?Sized>(
    lambda: &DVector<T>,
    kappa1: T,
    relpos: &[usize],
    r2: T,
    rng: &mut R,
) -> Result<DVector<T>> {
    design::validate_relpos(relpos, lambda.len())?;
    if !(r2 >= T::zero() && r2 < T::one()) {
        return Err(invalid!("r2 must lie in [0, 1), got {r2:?}"));
    }
    if !(kappa1 > T::zero()) {
        return Err(invalid!("kappa1 must be positive"));
    }
    let magnitude = Uniform::new_inclusive(0.1_f64, 1.0).expect("valid bounds");
    let mut sigma = DVector::zeros(lambda.len());
    let mut weight = T::zero();
    for &i in relpos {
        let mag: f64 = magnitude.sample(rng);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let rho = lit::<T>(sign * mag);
        sigma[i - 1] = rho;
        weight += rho * rho / lambda[i - 1];
    }
    if !(weight > T::zero()) {
        return Err(invalid!("degenerate latent cross-covariance draw"));
    }
    let scale = (r2 * kappa1 / weight).sqrt();
    Ok(sigma * scale)
}

/// `k × k` orthonormal matrix from a Gaussian matrix.
pub(crate) fn random_orthonormal<T: Real, R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<T> {
    let mut raw = DMatrix::<T>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let z: f64 = StandardNormal.sample(rng);
            raw[(i, j)] = lit(z);
        }
    }
    orthonormalize(raw)
}

/// Block orthonormal predictor rotation: one random block acting on the
/// `relpos` coordinates, an independent one on the remaining coordinates.
pub fn block_rotation_x<T: Real, R: Rng + ?Sized>(p: usize, relpos: &[usize], rng: &mut R) -> Result<DMatrix<T>> {
    design::validate_relpos(relpos, p)?;
    let mut rel: Vec<usize> = relpos.iter().map(|&i| i - 1).collect();
    rel.sort_unstable();
    let rest: Vec<usize> = (0..p).filter(|i| rel.binary_search(i).is_err()).collect();
    let mut rot = DMatrix::zeros(p, p);
    for block in [&rel, &rest] {
        if block.is_empty() {
            continue;
        }
        let q = random_orthonormal::<T, R>(block.len(), rng);
        for (a, &i) in block.iter().enumerate() {
            for (b, &j) in block.iter().enumerate() {
                rot[(i, j)] = q[(a, b)];
            }
        }
    }
    Ok(rot)
}

/// Full random response rotation (a single block holding every response).
pub fn rotation_y<T: Real, R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<DMatrix<T>> {
    if m == 0 {
        return Err(invalid!("m must be positive"));
    }
    Ok(random_orthonormal(m, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_defect;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn predictor_eigenvalue_examples() {
        let l = predictor_eigenvalues(20, 0.2).unwrap();
        assert_eq!(l[0], 1.0);
        let l = predictor_eigenvalues(20, 0.9_f64).unwrap();
        // exp(-0.9) evaluated with mpmath at 30 digits.
        assert!((l[1] - 0.406_569_659_740_599_1).abs() < 1e-15);
        assert!(predictor_eigenvalues(20, 0.0_f64).unwrap().iter().all(|&v| v == 1.0));
        assert!(predictor_eigenvalues(0, 0.2_f64).is_err());
        assert!(predictor_eigenvalues(5, -0.1_f64).is_err());
    }

    #[test]
    fn response_eigenvalue_examples() {
        assert_eq!(response_eigenvalues(4, 0.0_f64).unwrap().as_slice(), &[1.0; 4]);
        let k = response_eigenvalues(4, 1.2_f64).unwrap();
        // exp(-1.2) evaluated with mpmath at 30 digits.
        assert!((k[1] - 0.301_194_211_912_202_1).abs() < 1e-15);
        assert_eq!(response_eigenvalues(1, 7.5_f64).unwrap()[0], 1.0);
        assert!(response_eigenvalues(4, -1.0_f64).is_err());
    }

    #[test]
    fn eigenvalues_in_f32() {
        let l = predictor_eigenvalues(3, 0.5_f32).unwrap();
        assert!((l[2] - (-1.0_f32).exp()).abs() < 1e-6);
    }

    #[test]
    fn single_component_cross_covariance() {
        let mut rng = SimRng::seed_from_u64(1);
        let lambda = DVector::from_element(1, 1.0);
        let s = latent_cross_covariance(&lambda, 1.0, &[1], 0.8, &mut rng).unwrap();
        assert!((s[0] * s[0] - 0.8_f64).abs() < 1e-14);
    }

    #[test]
    fn cross_covariance_is_sparse() {
        let mut rng = SimRng::seed_from_u64(3);
        let lambda = predictor_eigenvalues(20, 0.9).unwrap();
        let s = latent_cross_covariance(&lambda, 1.0, &[5, 6, 7, 8], 0.8, &mut rng).unwrap();
        for i in 0..20 {
            assert_eq!(s[i] != 0.0, (4..8).contains(&i), "index {i}");
        }
    }

    #[test]
    fn cross_covariance_rejects_r2_one() {
        let mut rng = SimRng::seed_from_u64(3);
        let lambda = predictor_eigenvalues(4, 0.2).unwrap();
        assert!(latent_cross_covariance(&lambda, 1.0, &[1], 1.0, &mut rng).is_err());
    }

    #[test]
    fn tiny_rotations() {
        let mut rng = SimRng::seed_from_u64(5);
        let r: DMatrix<f64> = block_rotation_x(1, &[1], &mut rng).unwrap();
        assert_eq!(r[(0, 0)].abs(), 1.0);
        let r: DMatrix<f64> = rotation_y(1, &mut rng).unwrap();
        assert_eq!(r[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn response_rotation_loads_every_response() {
        for seed in 0..20 {
            let mut rng = SimRng::seed_from_u64(seed);
            let r: DMatrix<f64> = rotation_y(4, &mut rng).unwrap();
            assert!(r.column(0).iter().all(|v| v.abs() > 1e-6));
        }
    }

    proptest! {
        #[test]
        fn latent_r2_identity(seed in any::<u64>(), gamma in 0.0..1.5_f64, kappa1 in 0.1..3.0_f64, r2 in 0.0..0.99_f64) {
            let mut rng = SimRng::seed_from_u64(seed);
            let lambda = predictor_eigenvalues(12, gamma).unwrap();
            let s = latent_cross_covariance(&lambda, kappa1, &[2, 5, 9], r2, &mut rng).unwrap();
            let got: f64 = (0..12).map(|i| s[i] * s[i] / (lambda[i] * kappa1)).sum();
            prop_assert!((got - r2).abs() < 1e-12);
        }

        #[test]
        fn block_rotation_is_orthonormal_and_block_sparse(seed in any::<u64>(), p in 2usize..15) {
            let mut rng = SimRng::seed_from_u64(seed);
            let relpos: Vec<usize> = (1..=p).filter(|i| i % 3 == 1).collect();
            let r: DMatrix<f64> = block_rotation_x(p, &relpos, &mut rng).unwrap();
            prop_assert!(orthonormality_defect(&r) < 1e-10);
            for i in 0..p {
                for j in 0..p {
                    if relpos.contains(&(i + 1)) != relpos.contains(&(j + 1)) {
                        prop_assert_eq!(r[(i, j)], 0.0);
                    }
                }
            }
        }
    }
}

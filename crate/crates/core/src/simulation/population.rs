use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{block_rotation_x, latent_cross_covariance, predictor_eigenvalues, response_eigenvalues, rotation_y, SimDesign};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// True joint covariance of `(y, x)` together with the latent quantities it
/// was built from.
///
/// Latent predictor components `z` have covariance `diag(lambda)`, latent
/// response components `w` have `diag(kappa)`, and only the first response
/// component is correlated with `z`. Observed variables are rotations
/// `x = rot_x z`, `y = rot_y w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel<T: Real> {
    pub design_id: u32,
    pub lambda: DVector<T>,
    pub kappa: DVector<T>,
    /// `p × m`, nonzero only in column 0 at the relevant rows.
    pub sigma_zw: DMatrix<T>,
    pub rot_x: DMatrix<T>,
    pub rot_y: DMatrix<T>,
    pub sigma_xx: DMatrix<T>,
    pub sigma_xy: DMatrix<T>,
    pub sigma_yy: DMatrix<T>,
    pub beta_true: DMatrix<T>,
    pub sigma2_y: DVector<T>,
    pub sigma2_eps: DVector<T>,
}

impl<T: Real> PopulationModel<T> {
    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    pub fn m(&self) -> usize {
        self.kappa.len()
    }

    /// `(m + p) × (m + p)` covariance of `(y, x)`, responses first.
    pub fn joint_covariance(&self) -> DMatrix<T> {
        let (m, p) = (self.m(), self.p());
        let mut out = DMatrix::zeros(m + p, m + p);
        out.view_mut((0, 0), (m, m)).copy_from(&self.sigma_yy);
        out.view_mut((m, m), (p, p)).copy_from(&self.sigma_xx);
        out.view_mut((m, 0), (p, m)).copy_from(&self.sigma_xy);
        out.view_mut((0, m), (m, p)).copy_from(&self.sigma_xy.transpose());
        out
    }

    /// Covariance of the latent `(w, z)` vector, responses first.
    pub fn latent_covariance(&self) -> DMatrix<T> {
        let (m, p) = (self.m(), self.p());
        let mut out = DMatrix::zeros(m + p, m + p);
        for j in 0..m {
            out[(j, j)] = self.kappa[j];
        }
        for i in 0..p {
            out[(m + i, m + i)] = self.lambda[i];
        }
        out.view_mut((m, 0), (p, m)).copy_from(&self.sigma_zw);
        out.view_mut((0, m), (m, p)).copy_from(&self.sigma_zw.transpose());
        out
    }

    /// Lower Cholesky factor of the latent covariance.
    ///
    /// The joint covariance is `B C Bᵀ` with `B = diag(rot_y, rot_x)`
    /// orthogonal, so it is positive definite exactly when this
    /// factorization succeeds. Factoring the latent form stays accurate
    /// when predictor eigenvalues span hundreds of orders of magnitude.
    pub fn latent_factor(&self) -> Result<DMatrix<T>> {
        let c = self.latent_covariance();
        let chol = c.cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite(format!("joint covariance of design {}", self.design_id))
        })?;
        let l = chol.unpack();
        if l.diagonal().iter().any(|&d| !(d > T::zero())) {
            return Err(Error::NotPositiveDefinite(format!("joint covariance of design {}", self.design_id)));
        }
        Ok(l)
    }

    /// `Σ σ_i² / (λ_i κ₁)`, the population R² of the informative response
    /// component.
    pub fn latent_r2(&self) -> T {
        let k1 = self.kappa[0];
        (0..self.p())
            .map(|i| self.sigma_zw[(i, 0)] * self.sigma_zw[(i, 0)] / (self.lambda[i] * k1))
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Builds the population covariance for a design.
///
/// Draw order from `rng`: latent cross-covariance, predictor rotation,
/// response rotation.
pub fn assemble_population<T: Real, R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Result<PopulationModel<T>> {
    design.validate()?;
    let (p, m) = (design.p, design.m);
    let lambda = predictor_eigenvalues::<T>(p, lit(design.gamma))?;
    let kappa = response_eigenvalues::<T>(m, lit(design.eta))?;
    let sigma = latent_cross_covariance(&lambda, kappa[0], &design.relpos, lit(design.r2), rng)?;
    let rot_x = block_rotation_x::<T, R>(p, &design.relpos, rng)?;
    let rot_y = rotation_y::<T, R>(m, rng)?;

    let mut sigma_zw = DMatrix::zeros(p, m);
    sigma_zw.set_column(0, &sigma);

    let scale_rows = |d: &DVector<T>| {
        let mut a = rot_x.clone();
        for j in 0..p {
            let s = d[j];
            a.column_mut(j).scale_mut(s);
        }
        a
    };
    let sigma_xx = crate::linalg::symmetrize(&(scale_rows(&lambda) * rot_x.transpose()));
    let mut k_rot = rot_y.clone();
    for j in 0..m {
        k_rot.column_mut(j).scale_mut(kappa[j]);
    }
    let sigma_yy = crate::linalg::symmetrize(&(k_rot * rot_y.transpose()));
    let sigma_xy = &rot_x * &sigma_zw * rot_y.transpose();

    let mut zw_scaled = sigma_zw.clone();
    for i in 0..p {
        zw_scaled.row_mut(i).unscale_mut(lambda[i]);
    }
    let beta_true = &rot_x * zw_scaled * rot_y.transpose();

    // Latent conditional covariance: diag(κ) − Σzwᵀ Λ⁻¹ Σzw touches only (0, 0).
    let mut cond = DMatrix::from_diagonal(&kappa);
    cond[(0, 0)] -= sigma
        .iter()
        .zip(lambda.iter())
        .map(|(&s, &l)| s * s / l)
        .fold(T::zero(), |a, b| a + b);
    let cond_y = &rot_y * cond * rot_y.transpose();

    let sigma2_y = sigma_yy.diagonal();
    let sigma2_eps = cond_y.diagonal();
    let model = PopulationModel {
        design_id: design.design_id,
        lambda,
        kappa,
        sigma_zw,
        rot_x,
        rot_y,
        sigma_xx,
        sigma_xy,
        sigma_yy,
        beta_true,
        sigma2_y,
        sigma2_eps,
    };
    model.latent_factor()?;
    if model.sigma2_eps.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::NotPositiveDefinite(format!(
            "conditional response variance of design {}",
            design.design_id
        )));
    }
    Ok(model)
}

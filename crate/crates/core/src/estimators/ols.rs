use nalgebra::DMatrix;

use super::moments::{center, rank_tolerance, Moments};
use crate::error::{Error, Result};
use crate::linalg::spd_solve;
use crate::scalar::Real;

/// Least squares on moments: solves `Sxx B = Sxy`.
pub fn ols_moments<T: Real>(mom: &Moments<T>) -> Result<DMatrix<T>> {
    let p = mom.p();
    let eig = mom.sxx_eigen();
    let rank = eig.rank(rank_tolerance(p));
    if rank < p {
        return Err(Error::Singular(format!("Sxx has rank {rank} < p = {p}; pre-reduce first")));
    }
    spd_solve(&mom.sxx, &mom.sxy, "Sxx")
}

/// Ordinary least squares `B = Sxx⁻¹ Sxy` from raw data.
pub fn fit_ols<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<DMatrix<T>> {
    let c = center(x, y)?;
    if c.x.nrows() <= c.x.ncols() {
        return Err(Error::Singular(format!(
            "n = {} <= p = {}: centered predictors cannot have full rank",
            c.x.nrows(),
            c.x.ncols()
        )));
    }
    ols_moments(&Moments::from_centered(&c.x, &c.y))
}

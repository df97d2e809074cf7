use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::{cross_product, Eigen};
use crate::scalar::{count, Real};

/// Column-centered data and the means that were removed.
#[derive(Debug, Clone)]
pub struct Centered<T: Real> {
    pub x: DMatrix<T>,
    pub y: DMatrix<T>,
    pub x_mean: DVector<T>,
    pub y_mean: DVector<T>,
}

/// Subtracts column means from `x` and `y`.
pub fn center<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<Centered<T>> {
    let n = x.nrows();
    if n < 2 {
        return Err(invalid!("centering needs at least two observations, got {n}"));
    }
    if y.nrows() != n {
        return Err(invalid!("x has {n} rows but y has {}", y.nrows()));
    }
    let (xc, x_mean) = center_columns(x);
    let (yc, y_mean) = center_columns(y);
    Ok(Centered { x: xc, y: yc, x_mean, y_mean })
}

pub(crate) fn center_columns<T: Real>(a: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let n = count::<T>(a.nrows());
    let means = DVector::from_iterator(a.ncols(), a.column_iter().map(|c| c.sum() / n));
    let mut out = a.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        c.add_scalar_mut(-means[j]);
    }
    (out, means)
}

/// Second moments `(Sxx, Sxy, Syy)` every estimator works from.
///
/// Built either from centered data or directly from population covariance
/// blocks.
#[derive(Debug, Clone)]
pub struct Moments<T: Real> {
    pub sxx: DMatrix<T>,
    pub sxy: DMatrix<T>,
    pub syy: DMatrix<T>,
}

impl<T: Real> Moments<T> {
    pub fn from_centered(x: &DMatrix<T>, y: &DMatrix<T>) -> Self {
        Moments {
            sxx: cross_product(x, x),
            sxy: cross_product(x, y),
            syy: cross_product(y, y),
        }
    }

    pub fn from_blocks(sxx: DMatrix<T>, sxy: DMatrix<T>, syy: DMatrix<T>) -> Result<Self> {
        let (p, m) = sxy.shape();
        if sxx.shape() != (p, p) || syy.shape() != (m, m) {
            return Err(invalid!(
                "inconsistent moment blocks: sxx {:?}, sxy {:?}, syy {:?}",
                sxx.shape(),
                sxy.shape(),
                syy.shape()
            ));
        }
        Ok(Moments { sxx, sxy, syy })
    }

    pub fn p(&self) -> usize {
        self.sxy.nrows()
    }

    pub fn m(&self) -> usize {
        self.sxy.ncols()
    }

    /// Moments of the predictor scores `x · basis`.
    pub fn project(&self, basis: &DMatrix<T>) -> Self {
        Moments {
            sxx: basis.transpose() * &self.sxx * basis,
            sxy: basis.transpose() * &self.sxy,
            syy: self.syy.clone(),
        }
    }

    /// Keeps response column `j` only.
    pub fn response(&self, j: usize) -> Self {
        Moments {
            sxx: self.sxx.clone(),
            sxy: self.sxy.columns(j, 1).into_owned(),
            syy: self.syy.view((j, j), (1, 1)).into_owned(),
        }
    }

    pub fn sxx_eigen(&self) -> Eigen<T> {
        Eigen::new(&self.sxx)
    }
}

/// Relative eigenvalue threshold below which a predictor direction counts
/// as numerically absent.
pub(crate) fn rank_tolerance<T: Real>(p: usize) -> T {
    count::<T>(p.max(1) * 100) * T::default_epsilon()
}

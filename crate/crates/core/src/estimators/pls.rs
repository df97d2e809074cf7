use nalgebra::{DMatrix, DVector};

use super::moments::{rank_tolerance, Moments};
use super::{FitStatus, PathStep};
use crate::linalg::Eigen;
use crate::scalar::Real;

/// Kernel PLS path on all responses jointly (PLS2).
///
/// Works on the cross-product matrices only. Each step takes the dominant
/// left singular direction of the deflated `Sxy`, orthogonalizes it against
/// the previous loadings to get the weight in original coordinates, and
/// deflates `Sxy`. The resulting coefficients coincide with NIPALS.
pub fn pls2_path<T: Real>(mom: &Moments<T>, lmax: usize) -> Vec<PathStep<T>> {
    let (p, m) = (mom.p(), mom.m());
    let max_comp = mom.sxx_eigen().rank(rank_tolerance(p));
    let scale = mom.sxy.norm();
    let tol = rank_tolerance::<T>(p.max(m));

    let mut xty = mom.sxy.clone();
    let mut weights: Vec<DVector<T>> = Vec::new();
    let mut loadings: Vec<DVector<T>> = Vec::new();
    let mut coef = DMatrix::zeros(p, m);
    let mut out = vec![PathStep::ok(coef.clone())];
    let mut stopped = false;

    for a in 1..=lmax {
        if stopped || a > max_comp {
            out.push(PathStep { coef: coef.clone(), status: FitStatus::Truncated { used: a - 1 } });
            stopped = true;
            continue;
        }
        let mut w = if m == 1 {
            xty.column(0).into_owned()
        } else {
            let q = Eigen::new(&(xty.transpose() * &xty)).vectors.column(0).into_owned();
            &xty * q
        };
        let wn = w.norm();
        if !(wn > tol * scale) || !(scale > T::zero()) {
            log::debug!("PLS: no cross-covariance left at component {a}");
            out.push(PathStep { coef: coef.clone(), status: FitStatus::Truncated { used: a - 1 } });
            stopped = true;
            continue;
        }
        w /= wn;
        let mut r = w.clone();
        for (rj, pj) in weights.iter().zip(&loadings) {
            let c = pj.dot(&w);
            r -= rj * c;
        }
        let sxx_r = &mom.sxx * &r;
        let tt = r.dot(&sxx_r);
        if !(tt > T::zero()) {
            out.push(PathStep { coef: coef.clone(), status: FitStatus::Truncated { used: a - 1 } });
            stopped = true;
            continue;
        }
        let p_a = sxx_r / tt;
        let q_a = xty.transpose() * &r / tt;
        xty -= &p_a * q_a.transpose() * tt;
        coef += &r * q_a.transpose();
        weights.push(r);
        loadings.push(p_a);
        out.push(PathStep::ok(coef.clone()));
    }
    out
}

/// PLS1: an independent single-response PLS path per response column.
pub fn pls1_path<T: Real>(mom: &Moments<T>, lmax: usize) -> Vec<PathStep<T>> {
    let (p, m) = (mom.p(), mom.m());
    let mut out: Vec<PathStep<T>> = (0..=lmax).map(|_| PathStep::ok(DMatrix::zeros(p, m))).collect();
    for j in 0..m {
        let single = pls2_path(&mom.response(j), lmax);
        for (l, step) in single.into_iter().enumerate() {
            out[l].coef.set_column(j, &step.coef.column(0));
            if step.status != FitStatus::Ok && out[l].status == FitStatus::Ok {
                out[l].status = step.status;
            }
        }
    }
    out
}

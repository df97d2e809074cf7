use nalgebra::DMatrix;

use super::moments::{rank_tolerance, Moments};
use super::{FitStatus, PathStep};
use crate::scalar::Real;

/// Principal component regression path for `l = 0..=lmax`.
///
/// Component `l` regresses on the scores of the `l` leading eigenvectors of
/// `Sxx`; the back-projected coefficient is `Σ_{i≤l} v_i v_iᵀ Sxy / λ_i`.
/// Steps beyond the numerical rank of `Sxx` repeat the last full-rank fit.
pub fn pcr_path<T: Real>(mom: &Moments<T>, lmax: usize) -> Vec<PathStep<T>> {
    let (p, m) = (mom.p(), mom.m());
    let eig = mom.sxx_eigen();
    let rank = eig.rank(rank_tolerance(p));
    let mut coef = DMatrix::zeros(p, m);
    let mut out = vec![PathStep::ok(coef.clone())];
    for l in 1..=lmax {
        if l > rank {
            log::debug!("PCR: {l} components requested, rank is {rank}");
            out.push(PathStep { coef: coef.clone(), status: FitStatus::Truncated { used: rank } });
            continue;
        }
        let v = eig.vectors.column(l - 1);
        let load = v.transpose() * &mom.sxy / eig.values[l - 1];
        coef += v * load;
        out.push(PathStep::ok(coef.clone()));
    }
    out
}

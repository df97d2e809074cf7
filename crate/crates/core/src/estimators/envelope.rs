//! Predictor and simultaneous envelope estimation.
//!
//! Both reduce to minimizing
//!
//! ```text
//! J(Γ) = log det(Γᵀ M Γ) + log det(Γᵀ (M + U)⁻¹ Γ)
//! ```
//!
//! over semi-orthogonal `Γ`. The optimizer scores a pool of eigenvector
//! subsets, then runs cyclic single-column updates. With the other columns
//! fixed, the objective in the remaining column `g` is
//! `log(gᵀAg) + log(gᵀBg)` on the unit sphere of the complement, which is
//! majorized at the current point by `2 log((c gᵀAg + gᵀBg / c) / 2)` with
//! `c = sqrt(b / a)`; minimizing the majorizer is a smallest-eigenvector
//! problem, so every update is monotone.

use nalgebra::{DMatrix, DVector};

use super::moments::Moments;
use crate::error::{invalid, Error, Result};
use crate::linalg::{complement_basis, logdet_spd, spd_inverse, symmetrize, Eigen};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeOptions {
    /// Extra eigenvectors beyond the target dimension in the candidate pool.
    pub pool_extra: usize,
    /// Subset pools larger than this are searched greedily instead of
    /// enumerated.
    pub max_enumerated: usize,
    pub max_sweeps: usize,
    pub rel_tol: f64,
    /// Majorize-minimize steps per column visit.
    pub mm_steps: usize,
    /// Alternation cap for the simultaneous envelope.
    pub max_alternations: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            pool_extra: 10,
            max_enumerated: 2000,
            max_sweeps: 500,
            rel_tol: 1e-8,
            mm_steps: 3,
            max_alternations: 100,
        }
    }
}

/// `J(Γ)` with `(M + U)⁻¹` precomputed.
#[derive(Debug, Clone)]
pub struct EnvelopeObjective<T: Real> {
    m: DMatrix<T>,
    n: DMatrix<T>,
}

impl<T: Real> EnvelopeObjective<T> {
    pub fn new(m_mat: &DMatrix<T>, u_mat: &DMatrix<T>) -> Result<Self> {
        let p = m_mat.nrows();
        if m_mat.shape() != (p, p) || u_mat.shape() != (p, p) {
            return Err(invalid!("envelope matrices must be square and of equal size"));
        }
        let m = symmetrize(m_mat);
        if m.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("envelope M matrix".into()));
        }
        let n = spd_inverse(&(&m + symmetrize(u_mat)), "envelope M + U matrix")?;
        Ok(EnvelopeObjective { m, n })
    }

    pub fn p(&self) -> usize {
        self.m.nrows()
    }

    /// `J(Γ)`; `+∞` when either block is numerically singular.
    pub fn value(&self, g: &DMatrix<T>) -> T {
        let a = g.transpose() * &self.m * g;
        let b = g.transpose() * &self.n * g;
        match (logdet_spd(&a), logdet_spd(&b)) {
            (Some(x), Some(y)) => x + y,
            _ => T::max_value().unwrap(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvelopeFit<T: Real> {
    /// `p × u` semi-orthogonal basis.
    pub basis: DMatrix<T>,
    pub objective: T,
    /// Best objective in the initialization pool.
    pub pool_best: T,
    pub sweeps: usize,
    pub converged: bool,
}

/// Minimizes `J` over `p × dim` semi-orthogonal matrices.
pub fn envelope_basis<T: Real>(
    m_mat: &DMatrix<T>,
    u_mat: &DMatrix<T>,
    dim: usize,
    opts: &EnvelopeOptions,
) -> Result<EnvelopeFit<T>> {
    let obj = EnvelopeObjective::new(m_mat, u_mat)?;
    optimize(&obj, m_mat, u_mat, dim, opts, None)
}

/// As [`envelope_basis`], with an extra starting candidate.
pub fn envelope_basis_warm<T: Real>(
    m_mat: &DMatrix<T>,
    u_mat: &DMatrix<T>,
    dim: usize,
    opts: &EnvelopeOptions,
    warm: &DMatrix<T>,
) -> Result<EnvelopeFit<T>> {
    let obj = EnvelopeObjective::new(m_mat, u_mat)?;
    optimize(&obj, m_mat, u_mat, dim, opts, Some(warm))
}

fn optimize<T: Real>(
    obj: &EnvelopeObjective<T>,
    m_mat: &DMatrix<T>,
    u_mat: &DMatrix<T>,
    dim: usize,
    opts: &EnvelopeOptions,
    warm: Option<&DMatrix<T>>,
) -> Result<EnvelopeFit<T>> {
    let p = obj.p();
    if dim == 0 || dim > p {
        return Err(invalid!("envelope dimension {dim} outside 1..={p}"));
    }
    if dim == p {
        let basis = DMatrix::identity(p, p);
        let value = obj.value(&basis);
        return Ok(EnvelopeFit { basis, objective: value, pool_best: value, sweeps: 0, converged: true });
    }

    let (mut basis, pool_best) = pool_search(obj, m_mat, u_mat, dim, opts, warm);
    let mut frame = DMatrix::zeros(p, p);
    frame.columns_mut(0, dim).copy_from(&basis);
    frame.columns_mut(dim, p - dim).copy_from(&complement_basis(&basis));

    let tol: T = lit(opts.rel_tol);
    let mut value = pool_best;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        for k in 0..dim {
            update_column(obj, &mut frame, dim, k, opts.mm_steps);
        }
        let candidate = frame.columns(0, dim).into_owned();
        let next = obj.value(&candidate);
        let improved = next <= value;
        if improved {
            basis = candidate;
        }
        let change = (value - next).abs();
        let scale = value.abs().max(T::one());
        if improved {
            value = next;
        }
        if !improved || change <= tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("envelope optimizer hit the sweep cap ({}) at dim {dim}", opts.max_sweeps);
    }
    Ok(EnvelopeFit { basis, objective: value, pool_best, sweeps, converged })
}

/// Best eigenvector subset from `M` and `M + U`, plus the warm start.
fn pool_search<T: Real>(
    obj: &EnvelopeObjective<T>,
    m_mat: &DMatrix<T>,
    u_mat: &DMatrix<T>,
    dim: usize,
    opts: &EnvelopeOptions,
    warm: Option<&DMatrix<T>>,
) -> (DMatrix<T>, T) {
    let p = obj.p();
    let k = p.min(dim + opts.pool_extra);
    let mut best: Option<(DMatrix<T>, T)> = None;
    let mut consider = |g: DMatrix<T>, v: T| {
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((g, v));
        }
    };
    for source in [symmetrize(m_mat), symmetrize(&(m_mat + u_mat))] {
        let vecs = Eigen::new(&source).vectors.columns(0, k).into_owned();
        let a = vecs.transpose() * &obj.m * &vecs;
        let b = vecs.transpose() * &obj.n * &vecs;
        let score = |subset: &[usize]| -> T {
            let sa = a.select_rows(subset).select_columns(subset);
            let sb = b.select_rows(subset).select_columns(subset);
            match (logdet_spd(&sa), logdet_spd(&sb)) {
                (Some(x), Some(y)) => x + y,
                _ => T::max_value().unwrap(),
            }
        };
        let subset = if binomial(k, dim) <= opts.max_enumerated as u128 {
            enumerate_subsets(k, dim, &score)
        } else {
            greedy_subset(k, dim, &score)
        };
        let g = vecs.select_columns(&subset);
        let v = obj.value(&g);
        consider(g, v);
    }
    if let Some(w) = warm {
        if w.shape() == (p, dim) {
            let g = crate::linalg::orthonormalize(w.clone());
            let v = obj.value(&g);
            consider(g, v);
        }
    }
    best.expect("pool is never empty")
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return acc;
        }
    }
    acc
}

fn enumerate_subsets<T: Real>(k: usize, dim: usize, score: &dyn Fn(&[usize]) -> T) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dim).collect();
    let mut best = idx.clone();
    let mut best_v = score(&idx);
    loop {
        // next combination in lexicographic order
        let mut i = dim;
        while i > 0 && idx[i - 1] == k - dim + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..dim {
            idx[j] = idx[j - 1] + 1;
        }
        let v = score(&idx);
        if v < best_v {
            best_v = v;
            best.clone_from(&idx);
        }
    }
    best
}

fn greedy_subset<T: Real>(k: usize, dim: usize, score: &dyn Fn(&[usize]) -> T) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut best: Option<(usize, T)> = None;
        for c in (0..k).filter(|c| !chosen.contains(c)) {
            let mut trial = chosen.clone();
            trial.push(c);
            trial.sort_unstable();
            let v = score(&trial);
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((c, v));
            }
        }
        chosen.push(best.expect("candidates remain").0);
        chosen.sort_unstable();
    }
    let mut current = score(&chosen);
    for _ in 0..50 {
        let mut improved = false;
        for pos in 0..dim {
            for c in 0..k {
                if chosen.contains(&c) {
                    continue;
                }
                let mut trial = chosen.clone();
                trial[pos] = c;
                trial.sort_unstable();
                let v = score(&trial);
                if v < current {
                    current = v;
                    chosen = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    chosen
}

/// Majorize-minimize update of column `k` of the orthogonal `frame`, whose
/// first `dim` columns are the current basis.
fn update_column<T: Real>(obj: &EnvelopeObjective<T>, frame: &mut DMatrix<T>, dim: usize, k: usize, mm_steps: usize) {
    let p = frame.nrows();
    let rest: Vec<usize> = (0..dim).filter(|&i| i != k).collect();
    let free: Vec<usize> = std::iter::once(k).chain(dim..p).collect();
    let reduce = |s: &DMatrix<T>| -> DMatrix<T> {
        let t = frame.transpose() * s * &*frame;
        let tff = t.select_rows(&free).select_columns(&free);
        if rest.is_empty() {
            return symmetrize(&tff);
        }
        let trr = t.select_rows(&rest).select_columns(&rest);
        let tfr = t.select_rows(&free).select_columns(&rest);
        match trr.cholesky() {
            Some(ch) => symmetrize(&(tff - &tfr * ch.solve(&tfr.transpose()))),
            None => symmetrize(&tff),
        }
    };
    let a = reduce(&obj.m);
    let b = reduce(&obj.n);
    let q = free.len();
    let mut w = DVector::zeros(q);
    w[0] = T::one();
    let quad = |mat: &DMatrix<T>, v: &DVector<T>| v.dot(&(mat * v));
    let (mut qa, mut qb) = (quad(&a, &w), quad(&b, &w));
    if !(qa > T::zero() && qb > T::zero()) {
        return;
    }
    let mut f = qa.ln() + qb.ln();
    let mut moved = false;
    for _ in 0..mm_steps {
        let c = (qb / qa).sqrt();
        let surrogate = &a * c + &b / c;
        let eig = Eigen::new(&surrogate);
        let cand = eig.vectors.column(q - 1).into_owned();
        let (na, nb) = (quad(&a, &cand), quad(&b, &cand));
        if !(na > T::zero() && nb > T::zero()) {
            break;
        }
        let nf = na.ln() + nb.ln();
        if nf < f {
            let gain = f - nf;
            w = cand;
            qa = na;
            qb = nb;
            f = nf;
            moved = true;
            if gain <= T::default_epsilon() * f.abs().max(T::one()) {
                break;
            }
        } else {
            break;
        }
    }
    if !moved {
        return;
    }
    // Householder reflection within the free block mapping e₁ to w, so the
    // first free column becomes the new basis column and the rest stay an
    // orthonormal complement.
    let mut v = w.clone();
    v[0] -= T::one();
    let vv = v.dot(&v);
    if !(vv > T::default_epsilon()) {
        return;
    }
    let q_block = frame.select_columns(&free);
    let reflected = &q_block - (&q_block * &v) * (v.transpose() * lit::<T>(2.0) / vv);
    for (dst, &col) in free.iter().enumerate() {
        frame.set_column(col, &reflected.column(dst));
    }
}

/// Result of a predictor envelope fit for one dimension.
#[derive(Debug, Clone)]
pub struct XenvFit<T: Real> {
    pub coef: DMatrix<T>,
    pub basis: DMatrix<T>,
    pub objective: T,
    pub converged: bool,
}

/// `β̂ = Γ (Γᵀ Sxx Γ)⁻¹ Γᵀ S`, with `S` the predictor/response cross block.
fn coefficients_on<T: Real>(sxx: &DMatrix<T>, cross: &DMatrix<T>, g: &DMatrix<T>) -> Result<DMatrix<T>> {
    let inner = g.transpose() * sxx * g;
    let solved = crate::linalg::spd_solve(&inner, &(g.transpose() * cross), "Γᵀ Sxx Γ")?;
    Ok(g * solved)
}

/// Residual and fitted covariance of `x` given `y`:
/// `(Sxx − Sxy Syy⁻¹ Syx, Sxy Syy⁻¹ Syx)`.
fn predictor_split<T: Real>(sxx: &DMatrix<T>, sxy: &DMatrix<T>, syy: &DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let syy_inv = spd_inverse(syy, "Syy")?;
    let fit = symmetrize(&(sxy * syy_inv * sxy.transpose()));
    let res = symmetrize(&(sxx - &fit));
    Ok((res, fit))
}

/// Predictor envelope of dimension `u` on moments.
pub fn xenv_moments<T: Real>(mom: &Moments<T>, u: usize, opts: &EnvelopeOptions) -> Result<XenvFit<T>> {
    xenv_inner(mom, u, opts, None)
}

fn xenv_inner<T: Real>(mom: &Moments<T>, u: usize, opts: &EnvelopeOptions, warm: Option<&DMatrix<T>>) -> Result<XenvFit<T>> {
    let p = mom.p();
    if u == 0 || u > p {
        return Err(invalid!("predictor envelope dimension {u} outside 1..={p}"));
    }
    let (res, fit) = predictor_split(&mom.sxx, &mom.sxy, &mom.syy)?;
    let env = match warm {
        Some(w) => envelope_basis_warm(&res, &fit, u, opts, w)?,
        None => envelope_basis(&res, &fit, u, opts)?,
    };
    let coef = coefficients_on(&mom.sxx, &mom.sxy, &env.basis)?;
    Ok(XenvFit { coef, basis: env.basis, objective: env.objective, converged: env.converged })
}

/// Result of a simultaneous envelope fit.
#[derive(Debug, Clone)]
pub struct SenvFit<T: Real> {
    pub coef: DMatrix<T>,
    /// `p × u` predictor basis.
    pub gamma: DMatrix<T>,
    /// `m × d` response basis.
    pub phi: DMatrix<T>,
    /// Joint objective after each alternation.
    pub objective_trace: Vec<T>,
    pub converged: bool,
}

/// Joint simultaneous-envelope objective (negative profile log-likelihood
/// up to constants):
///
/// `log det Cov(Γᵀx, Φᵀy) + log det(Γᵀ Sxx⁻¹ Γ) + log det(Φᵀ Syy⁻¹ Φ)`.
pub fn senv_objective<T: Real>(mom: &Moments<T>, gamma: &DMatrix<T>, phi: &DMatrix<T>) -> Result<T> {
    let (u, d) = (gamma.ncols(), phi.ncols());
    let mut joint = DMatrix::zeros(u + d, u + d);
    joint.view_mut((0, 0), (u, u)).copy_from(&(gamma.transpose() * &mom.sxx * gamma));
    joint.view_mut((u, u), (d, d)).copy_from(&(phi.transpose() * &mom.syy * phi));
    let cross = gamma.transpose() * &mom.sxy * phi;
    joint.view_mut((0, u), (u, d)).copy_from(&cross);
    joint.view_mut((u, 0), (d, u)).copy_from(&cross.transpose());
    let sxx_inv = spd_inverse(&mom.sxx, "Sxx")?;
    let syy_inv = spd_inverse(&mom.syy, "Syy")?;
    let parts = [
        logdet_spd(&joint),
        logdet_spd(&(gamma.transpose() * sxx_inv * gamma)),
        logdet_spd(&(phi.transpose() * syy_inv * phi)),
    ];
    parts
        .into_iter()
        .try_fold(T::zero(), |acc, v| v.map(|x| acc + x))
        .ok_or_else(|| Error::NotPositiveDefinite("simultaneous envelope objective".into()))
}

/// Simultaneous predictor-response envelope with predictor dimension `u` and
/// response dimension `d`, fitted by block coordinate descent on
/// [`senv_objective`].
///
/// Starts from the predictor envelope of dimension `u`, then alternates a
/// response step (envelope of `y` given `Γᵀx`) and a predictor step
/// (envelope of `x` given `Φᵀy`), each warm-started so the objective never
/// increases.
pub fn senv_moments<T: Real>(mom: &Moments<T>, u: usize, d: usize, opts: &EnvelopeOptions) -> Result<SenvFit<T>> {
    let (p, m) = (mom.p(), mom.m());
    if u == 0 || u > p {
        return Err(invalid!("predictor envelope dimension {u} outside 1..={p}"));
    }
    if d == 0 || d > m {
        return Err(invalid!("response envelope dimension {d} outside 1..={m}"));
    }
    let start = xenv_inner(mom, u, opts, None)?;
    let mut gamma = start.basis;
    let mut phi = DMatrix::<T>::identity(m, d);
    let mut trace: Vec<T> = Vec::new();
    let mut converged = false;
    let tol: T = lit(opts.rel_tol);
    let mut all_converged = start.converged;
    let mut best: Option<(DMatrix<T>, DMatrix<T>, T)> = None;

    for _ in 0..opts.max_alternations {
        // response step
        let gx = coefficients_on(&mom.sxx, &mom.sxy, &gamma)?;
        let fitted_y = symmetrize(&(mom.sxy.transpose() * &gx));
        let m_y = symmetrize(&(&mom.syy - &fitted_y));
        let resp = if d == m {
            None
        } else {
            Some(envelope_basis_warm(&m_y, &fitted_y, d, opts, &phi)?)
        };
        if let Some(r) = resp {
            all_converged &= r.converged;
            phi = r.basis;
        }

        // predictor step on the reduced response
        let reduced = Moments {
            sxx: mom.sxx.clone(),
            sxy: &mom.sxy * &phi,
            syy: phi.transpose() * &mom.syy * &phi,
        };
        let pred = xenv_inner(&reduced, u, opts, Some(&gamma))?;
        all_converged &= pred.converged;
        gamma = pred.basis;

        let value = senv_objective(mom, &gamma, &phi)?;
        if best.as_ref().is_none_or(|(_, _, b)| value <= *b) {
            best = Some((gamma.clone(), phi.clone(), value));
        }
        let done = trace
            .last()
            .map(|&prev: &T| (prev - value).abs() <= tol * prev.abs().max(T::one()) || value > prev)
            .unwrap_or(false);
        trace.push(value);
        if done {
            converged = true;
            break;
        }
    }
    let (gamma, phi, _) = best.expect("at least one alternation");
    let coef = coefficients_on(&mom.sxx, &(&mom.sxy * &phi), &gamma)? * phi.transpose();
    Ok(SenvFit { coef, gamma, phi, objective_trace: trace, converged: converged && all_converged })
}

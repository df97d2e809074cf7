//! Per-replicate estimation and prediction errors, component selection and
//! the assembled error (`u`) and component (`v`) datasets.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{CoefficientPath, MethodId};
use crate::scalar::{to_f64, Real};
use crate::simulation::PopulationModel;

/// `(β − β̂)ᵀ(β − β̂) / σ²_y`.
pub fn estimation_error<T: Real>(beta: DVectorView<'_, T>, beta_hat: DVectorView<'_, T>, sigma2_y: T) -> Result<T> {
    if beta.len() != beta_hat.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", beta.len(), beta_hat.len())));
    }
    if !(sigma2_y > T::zero()) {
        return Err(invalid!("response variance must be positive, got {sigma2_y:?}"));
    }
    let diff = beta - beta_hat;
    Ok(diff.dot(&diff) / sigma2_y)
}

/// Population mean squared prediction error at a fresh `x`, relative to the
/// irreducible error: `[(β̂ − β)ᵀ Σxx (β̂ − β) + σ²_ε] / σ²_ε`.
pub fn prediction_error<T: Real>(
    beta: DVectorView<'_, T>,
    beta_hat: DVectorView<'_, T>,
    sigma_xx: &DMatrix<T>,
    sigma2_eps: T,
) -> Result<T> {
    if beta.len() != beta_hat.len() || sigma_xx.nrows() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "beta {}, beta_hat {}, sigma_xx {:?}",
            beta.len(),
            beta_hat.len(),
            sigma_xx.shape()
        )));
    }
    if !(sigma2_eps > T::zero()) {
        return Err(invalid!("error variance must be positive, got {sigma2_eps:?}"));
    }
    let diff: DVector<T> = beta_hat - beta;
    let excess = diff.dot(&(sigma_xx * &diff)).max(T::zero());
    Ok((excess + sigma2_eps) / sigma2_eps)
}

/// One replicate's errors for one response at one component count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub design_id: u32,
    pub method: MethodId,
    pub replicate: u32,
    /// 1-based.
    pub response: u32,
    pub l: u32,
    pub est_error: f64,
    pub pred_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Estimation,
    Prediction,
}

impl ErrorRecord {
    pub fn value(&self, kind: ErrorKind) -> f64 {
        match kind {
            ErrorKind::Estimation => self.est_error,
            ErrorKind::Prediction => self.pred_error,
        }
    }
}

/// Errors of every path entry against the true coefficients. Failed fits
/// score `+∞`.
pub fn path_errors<T: Real>(
    path: &CoefficientPath<T>,
    pop: &PopulationModel<T>,
    design_id: u32,
    replicate: u32,
) -> Result<Vec<ErrorRecord>> {
    let m = pop.m();
    let mut out = Vec::with_capacity(path.coef.len() * m);
    for (l, (coef, status)) in path.coef.iter().zip(&path.status).enumerate() {
        for j in 0..m {
            let (est, pred) = if status.is_failed() {
                (f64::INFINITY, f64::INFINITY)
            } else {
                let b = pop.beta_true.column(j);
                let bh = coef.column(j);
                (
                    to_f64(estimation_error(b, bh, pop.sigma2_y[j])?),
                    to_f64(prediction_error(b, bh, &pop.sigma_xx, pop.sigma2_eps[j])?),
                )
            };
            out.push(ErrorRecord {
                design_id,
                method: path.method,
                replicate,
                response: (j + 1) as u32,
                l: l as u32,
                est_error: est,
                pred_error: pred,
            });
        }
    }
    Ok(out)
}

/// Mean over replicates for each component count. `paths[r][l]`.
pub fn average_error_path(paths: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = paths.first().ok_or_else(|| invalid!("no replicates to average"))?;
    let len = first.len();
    if paths.iter().any(|p| p.len() != len) {
        return Err(invalid!("replicate paths have unequal lengths"));
    }
    let r = paths.len() as f64;
    Ok((0..len).map(|l| paths.iter().map(|p| p[l]).sum::<f64>() / r).collect())
}

/// Component count minimizing the replicate-averaged error; ties go to the
/// smaller count.
pub fn select_common_component(avg_path: &[f64]) -> usize {
    argmin(avg_path)
}

/// Component count minimizing one replicate's error path.
pub fn select_per_replicate_component(path: &[f64]) -> usize {
    argmin(path)
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub design_id: u32,
    pub method: MethodId,
    pub replicate: u32,
}

/// Records grouped as `(design, method) → replicate → response → path`.
type Grouped = BTreeMap<(u32, MethodId), BTreeMap<u32, BTreeMap<u32, BTreeMap<u32, ErrorRecord>>>>;

fn group(records: &[ErrorRecord]) -> Result<(Grouped, usize, usize)> {
    if records.is_empty() {
        return Err(Error::Incomplete("no records".into()));
    }
    let mut g: Grouped = BTreeMap::new();
    for r in records {
        let slot = g
            .entry((r.design_id, r.method))
            .or_default()
            .entry(r.replicate)
            .or_default()
            .entry(r.response)
            .or_default();
        if slot.insert(r.l, *r).is_some() {
            return Err(invalid!(
                "duplicate record design {} {} replicate {} response {} l {}",
                r.design_id,
                r.method,
                r.replicate,
                r.response,
                r.l
            ));
        }
    }
    let m = records.iter().map(|r| r.response).max().unwrap_or(0) as usize;
    let lmax = records.iter().map(|r| r.l).max().unwrap_or(0) as usize;
    let mut missing = Vec::new();
    for ((d, meth), reps) in &g {
        for (rep, resp) in reps {
            for j in 1..=m as u32 {
                match resp.get(&j) {
                    None => missing.push(format!("design {d} {meth} replicate {rep} response {j}")),
                    Some(path) => {
                        for l in 0..=lmax as u32 {
                            if !path.contains_key(&l) {
                                missing.push(format!("design {d} {meth} replicate {rep} response {j} l {l}"));
                            }
                        }
                    }
                }
            }
        }
    }
    // replicate sets must agree across groups
    let rep_sets: BTreeSet<Vec<u32>> = g.values().map(|reps| reps.keys().copied().collect()).collect();
    if rep_sets.len() > 1 {
        let all: BTreeSet<u32> = rep_sets.iter().flatten().copied().collect();
        for ((d, meth), reps) in &g {
            for r in all.iter().filter(|r| !reps.contains_key(r)) {
                missing.push(format!("design {d} {meth} replicate {r}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Incomplete(missing.join("; ")));
    }
    Ok((g, m, lmax))
}

/// Estimation errors at the replicate-averaged optimal component count,
/// one row per (design, method, replicate), one column per response.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDataset {
    pub keys: Vec<RowKey>,
    pub u: DMatrix<f64>,
    /// Common component `l_o` per (design, method, response).
    pub common_component: BTreeMap<(u32, MethodId, u32), usize>,
}

/// Per-replicate minimizing component counts, same row layout as
/// [`ErrorDataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDataset {
    pub keys: Vec<RowKey>,
    pub v: DMatrix<f64>,
}

pub fn assemble_error_dataset(records: &[ErrorRecord]) -> Result<ErrorDataset> {
    let (g, m, _) = group(records)?;
    let rows: usize = g.values().map(|r| r.len()).sum();
    let mut keys = Vec::with_capacity(rows);
    let mut u = DMatrix::zeros(rows, m);
    let mut common = BTreeMap::new();
    let mut row0 = 0;
    for ((d, meth), reps) in &g {
        for j in 1..=m as u32 {
            let paths: Vec<Vec<f64>> = reps.values().map(|resp| resp[&j].values().map(|r| r.est_error).collect()).collect();
            let lo = select_common_component(&average_error_path(&paths)?);
            common.insert((*d, *meth, j), lo);
            for (k, path) in paths.iter().enumerate() {
                u[(row0 + k, (j - 1) as usize)] = path[lo];
            }
        }
        for rep in reps.keys() {
            keys.push(RowKey { design_id: *d, method: *meth, replicate: *rep });
        }
        row0 += reps.len();
    }
    Ok(ErrorDataset { keys, u, common_component: common })
}

pub fn assemble_component_dataset(records: &[ErrorRecord]) -> Result<ComponentDataset> {
    let (g, m, _) = group(records)?;
    let rows: usize = g.values().map(|r| r.len()).sum();
    let mut keys = Vec::with_capacity(rows);
    let mut v = DMatrix::zeros(rows, m);
    let mut row = 0;
    for ((d, meth), reps) in &g {
        for (rep, resp) in reps {
            for j in 1..=m as u32 {
                let path: Vec<f64> = resp[&j].values().map(|r| r.est_error).collect();
                v[(row, (j - 1) as usize)] = select_per_replicate_component(&path) as f64;
            }
            keys.push(RowKey { design_id: *d, method: *meth, replicate: *rep });
            row += 1;
        }
    }
    Ok(ComponentDataset { keys, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn estimation_error_examples() {
        let b = dvector![1.0, 0.0];
        assert_eq!(estimation_error(b.as_view(), b.as_view(), 2.0).unwrap(), 0.0);
        let z = dvector![0.0, 0.0];
        assert_eq!(estimation_error(b.as_view(), z.as_view(), 2.0).unwrap(), 0.5);
        assert!(estimation_error(b.as_view(), z.as_view(), 0.0).is_err());
    }

    #[test]
    fn estimation_error_matches_elementwise_sum() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(12);
        let a = DVector::from_fn(5, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let b = DVector::from_fn(5, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let mut oracle = 0.0;
        for i in 0..5 {
            oracle += (a[i] - b[i]) * (a[i] - b[i]);
        }
        oracle /= 1.7;
        assert!((estimation_error(a.as_view(), b.as_view(), 1.7).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn prediction_error_examples() {
        let b = dvector![1.0, 0.0];
        let sxx = DMatrix::identity(2, 2);
        assert_eq!(prediction_error(b.as_view(), b.as_view(), &sxx, 0.3).unwrap(), 1.0);
        let z = dvector![0.0, 0.0];
        assert_eq!(prediction_error(b.as_view(), z.as_view(), &sxx, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn prediction_error_matches_monte_carlo() {
        // Fresh draws x ~ N(0, Σxx), y = xᵀβ + ε; MSE of xᵀβ̂ against y.
        let sxx = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.1, 0.4, 0.8, -0.2, 0.1, -0.2, 0.5]);
        let chol = sxx.clone().cholesky().unwrap().unpack();
        let beta = dvector![0.7, -1.2, 0.4];
        let beta_hat = dvector![0.5, -0.8, 0.9];
        let s2 = 0.6;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(77);
        let draws = 200_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let z = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            let x = &chol * z;
            let e: f64 = StandardNormal.sample(&mut rng);
            let y = x.dot(&beta) + e * s2_f(s2);
            let r = y - x.dot(&beta_hat);
            acc += r * r;
        }
        let mc = acc / draws as f64 / s2;
        let exact = prediction_error(beta.as_view(), beta_hat.as_view(), &sxx, s2).unwrap();
        assert!((mc - exact).abs() / exact < 0.01, "mc {mc} exact {exact}");
    }

    fn s2_f(s2: f64) -> f64 {
        s2.sqrt()
    }

    #[test]
    fn averaging_examples() {
        assert_eq!(average_error_path(&[vec![1.0, 2.0]]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(average_error_path(&[vec![5.0], vec![5.0], vec![5.0]]).unwrap(), vec![5.0]);
        assert_eq!(average_error_path(&[vec![2.0], vec![4.0]]).unwrap(), vec![3.0]);
        assert!(average_error_path(&[]).is_err());
    }

    #[test]
    fn selection_examples() {
        let decreasing: Vec<f64> = (0..=10).map(|l| 20.0 - l as f64).collect();
        assert_eq!(select_common_component(&decreasing), 10);
        let mut bowl: Vec<f64> = (0..=10).map(|l| ((l as f64) - 8.0).powi(2) + 8.17).collect();
        assert_eq!(select_common_component(&bowl), 8);
        bowl.fill(3.0);
        assert_eq!(select_common_component(&bowl), 0);
        let env = [12.0, 6.65, 9.0, 15.0, 20.0];
        assert_eq!(select_per_replicate_component(&env), 1);
    }

    fn rec(design: u32, method: MethodId, rep: u32, resp: u32, l: u32, est: f64) -> ErrorRecord {
        ErrorRecord { design_id: design, method, replicate: rep, response: resp, l, est_error: est, pred_error: 1.0 + est }
    }

    /// Two replicates, one response, l = 0..=2.
    fn hand_built() -> Vec<ErrorRecord> {
        let paths = [[5.0, 2.0, 3.0], [4.0, 3.0, 1.0]];
        let mut out = Vec::new();
        for (r, path) in paths.iter().enumerate() {
            for (l, &e) in path.iter().enumerate() {
                out.push(rec(9, MethodId::Pcr, r as u32 + 1, 1, l as u32, e));
            }
        }
        out
    }

    #[test]
    fn hand_assembly() {
        // averaged path (4.5, 2.5, 2.0) → l_o = 2; u = (3, 1).
        let u = assemble_error_dataset(&hand_built()).unwrap();
        assert_eq!(u.u.shape(), (2, 1));
        assert_eq!(u.u.column(0).as_slice(), &[3.0, 1.0]);
        assert_eq!(u.common_component[&(9, MethodId::Pcr, 1)], 2);
        // per-replicate minima: 1 and 2.
        let v = assemble_component_dataset(&hand_built()).unwrap();
        assert_eq!(v.v.column(0).as_slice(), &[1.0, 2.0]);
        assert_eq!(v.keys[1], RowKey { design_id: 9, method: MethodId::Pcr, replicate: 2 });
    }

    #[test]
    fn incomplete_grid_lists_missing_cells() {
        let mut recs = hand_built();
        recs.remove(4);
        match assemble_error_dataset(&recs) {
            Err(Error::Incomplete(msg)) => assert!(msg.contains("replicate 2 response 1 l 1"), "{msg}"),
            other => panic!("expected incomplete, got {other:?}"),
        }
    }

    fn random_records(seed: u64) -> Vec<ErrorRecord> {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for d in [1, 2] {
            for meth in [MethodId::Pcr, MethodId::Senv] {
                for r in 1..=3 {
                    for j in 1..=2 {
                        for l in 0..=4 {
                            out.push(rec(d, meth, r, j, l, rng.random::<f64>() * 10.0));
                        }
                    }
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn assembly_is_permutation_invariant(seed in any::<u64>(), shuffle in any::<u64>()) {
            use rand::seq::SliceRandom;
            let recs = random_records(seed);
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha20Rng::seed_from_u64(shuffle));
            prop_assert_eq!(assemble_error_dataset(&recs).unwrap(), assemble_error_dataset(&shuffled).unwrap());
            prop_assert_eq!(assemble_component_dataset(&recs).unwrap(), assemble_component_dataset(&shuffled).unwrap());
        }

        #[test]
        fn common_component_attains_averaged_minimum(seed in any::<u64>()) {
            let recs = random_records(seed);
            let u = assemble_error_dataset(&recs).unwrap();
            for (&(d, meth, j), &lo) in &u.common_component {
                let paths: Vec<Vec<f64>> = (1..=3).map(|r| {
                    (0..=4).map(|l| recs.iter().find(|x| x.design_id == d && x.method == meth && x.replicate == r && x.response == j && x.l == l).unwrap().est_error).collect()
                }).collect();
                let avg = average_error_path(&paths).unwrap();
                let min = avg.iter().cloned().fold(f64::INFINITY, f64::min);
                prop_assert_eq!(avg[lo], min);
                prop_assert!(avg.iter().all(|&v| avg[lo] <= v));
            }
        }
    }
}

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::model::ModelMatrix;
use crate::error::{invalid, Error, Result};
use crate::linalg::{symmetrize, Eigen};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManovaTermResult {
    pub term: String,
    pub df: usize,
    pub pillai: f64,
    /// `+∞` when the statistic reaches its upper bound.
    pub approx_f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct ManovaTable {
    pub terms: Vec<ManovaTermResult>,
    pub residual_df: usize,
    /// Sequential hypothesis SSCP per term (intercept excluded), aligned with `terms`.
    pub hypothesis: Vec<DMatrix<f64>>,
    pub residual: DMatrix<f64>,
}

/// Multivariate least-squares fit with sequential (order-of-entry) SSCP
/// matrices and Pillai's trace per term.
pub fn manova_pillai(y: &DMatrix<f64>, model: &ModelMatrix) -> Result<ManovaTable> {
    let x = &model.x;
    let (n, k) = x.shape();
    let m = y.ncols();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch(format!("{} response rows vs {n} model rows", y.nrows())));
    }
    if n <= k {
        return Err(invalid!("MANOVA needs more rows ({n}) than model columns ({k})"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("MANOVA responses contain non-finite values"));
    }
    let q = x.clone().qr().q();
    let effects = q.tr_mul(y);
    let resid = y - &q * &effects;
    let e = symmetrize(&resid.tr_mul(&resid));
    let df_e = n - k;
    let scale = y.column_iter().map(|c| c.variance() * n as f64).fold(0.0, f64::max);
    let e_min = Eigen::new(&e).values.min();
    if !(e_min > 1e-12 * scale) {
        return Err(Error::Singular("residual SSCP".into()));
    }

    let mut results = Vec::new();
    let mut hyps = Vec::new();
    for term in model.terms.iter().filter(|t| !t.factors.is_empty()) {
        let rows = effects.rows(term.columns.start, term.df());
        let h = symmetrize(&rows.tr_mul(&rows));
        let he = &h + &e;
        let chol = he.cholesky().ok_or_else(|| Error::Singular(format!("H + E for {}", term.label)))?;
        let pillai = chol.solve(&h).trace().max(0.0);
        results.push(pillai_f(&term.label, term.df(), pillai, m, df_e));
        hyps.push(h);
    }
    Ok(ManovaTable { terms: results, residual_df: df_e, hypothesis: hyps, residual: e })
}

/// F approximation to Pillai's trace.
pub fn pillai_f(term: &str, df_t: usize, v: f64, m: usize, df_e: usize) -> ManovaTermResult {
    let s = df_t.min(m) as f64;
    let mm = ((df_t as f64 - m as f64).abs() - 1.0) / 2.0;
    let nn = (df_e as f64 - m as f64 - 1.0) / 2.0;
    let df1 = s * (2.0 * mm + s + 1.0);
    let df2 = s * (2.0 * nn + s + 1.0);
    let (approx_f, p_value) = if v >= s * (1.0 - 1e-12) {
        (f64::INFINITY, 0.0)
    } else {
        let f = (2.0 * nn + s + 1.0) / (2.0 * mm + s + 1.0) * v / (s - v);
        let p = FisherSnedecor::new(df1, df2).map(|d| d.sf(f)).unwrap_or(f64::NAN);
        (f, p)
    };
    ManovaTermResult { term: term.to_string(), df: df_t, pillai: v, approx_f, df1, df2, p_value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::model::{build_model_matrix, Factor, FactorFrame};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn one_way(groups: &[usize], nlev: usize) -> ModelMatrix {
        let levels = (0..nlev).map(|l| format!("g{l}")).collect();
        let frame = FactorFrame::new(vec![Factor::new("g", levels, groups.to_vec()).unwrap()]).unwrap();
        build_model_matrix(&frame, 1).unwrap()
    }

    #[test]
    fn hand_built_instance_matches_direct_sscp() {
        let y = DMatrix::from_row_slice(6, 2, &[1.0, 2.0, 2.0, 1.5, 3.0, 3.5, 4.0, 3.0, 5.5, 4.0, 4.5, 6.0]);
        let g = [0, 0, 0, 1, 1, 1];
        let table = manova_pillai(&y, &one_way(&g, 2)).unwrap();

        // direct arithmetic: between-group H and within-group E
        let mean = |rows: &[usize], j: usize| rows.iter().map(|&i| y[(i, j)]).sum::<f64>() / rows.len() as f64;
        let all = [0, 1, 2, 3, 4, 5];
        let grp = [[0, 1, 2], [3, 4, 5]];
        let mut h = [[0.0; 2]; 2];
        let mut e = [[0.0; 2]; 2];
        for rows in &grp {
            for a in 0..2 {
                for b in 0..2 {
                    h[a][b] += 3.0 * (mean(rows, a) - mean(&all, a)) * (mean(rows, b) - mean(&all, b));
                    for &i in rows {
                        e[a][b] += (y[(i, a)] - mean(rows, a)) * (y[(i, b)] - mean(rows, b));
                    }
                }
            }
        }
        let t = [[h[0][0] + e[0][0], h[0][1] + e[0][1]], [h[1][0] + e[1][0], h[1][1] + e[1][1]]];
        let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
        let ti = [[t[1][1] / det, -t[0][1] / det], [-t[1][0] / det, t[0][0] / det]];
        let v = h[0][0] * ti[0][0] + h[0][1] * ti[1][0] + h[1][0] * ti[0][1] + h[1][1] * ti[1][1];
        assert!((table.terms[0].pillai - v).abs() < 1e-10, "{} vs {v}", table.terms[0].pillai);
        for a in 0..2 {
            for b in 0..2 {
                assert!((table.residual[(a, b)] - e[a][b]).abs() < 1e-10);
                assert!((table.hypothesis[0][(a, b)] - h[a][b]).abs() < 1e-10);
            }
        }
        // s = 1: exact F with (m, df_e - m + 1) degrees of freedom
        let r = &table.terms[0];
        assert_eq!((r.df1, r.df2), (2.0, 3.0));
        assert!((r.approx_f - v / (1.0 - v) * 3.0 / 2.0).abs() < 1e-10);
    }

    #[test]
    fn sequential_sscp_is_additive_and_bounded() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let n = 48;
        let a: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let b: Vec<usize> = (0..n).map(|i| (i / 2) % 3).collect();
        let c: Vec<usize> = (0..n).map(|i| (i / 6) % 2).collect();
        let frame = FactorFrame::new(vec![
            Factor::new("a", vec!["0".into(), "1".into()], a.clone()).unwrap(),
            Factor::new("b", vec!["0".into(), "1".into(), "2".into()], b.clone()).unwrap(),
            Factor::new("c", vec!["0".into(), "1".into()], c).unwrap(),
        ])
        .unwrap();
        let mm = build_model_matrix(&frame, 3).unwrap();
        let y = DMatrix::from_fn(n, 3, |i, j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + a[i] as f64 * (j as f64) + 0.5 * b[i] as f64
        });
        let t = manova_pillai(&y, &mm).unwrap();
        let mut total = t.residual.clone();
        for h in &t.hypothesis {
            total += h;
        }
        let mut c = y.clone();
        for mut col in c.column_iter_mut() {
            let mu = col.mean();
            col.add_scalar_mut(-mu);
        }
        assert!((total - c.tr_mul(&c)).amax() < 1e-8);
        for r in &t.terms {
            assert!(r.pillai >= 0.0 && r.pillai <= r.df.min(3) as f64 + 1e-9, "{r:?}");
        }
        assert!(t.terms[0].p_value < 1e-3);
    }

    #[test]
    fn perfect_separation_reports_infinite_f() {
        let r = pillai_f("g", 1, 1.0, 2, 10);
        assert!(r.approx_f.is_infinite());
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn singular_residual_rejected() {
        // y constant within groups: E = 0
        let y = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(manova_pillai(&y, &one_way(&[0, 0, 1, 1], 2)), Err(Error::Singular(_))));
    }

    #[test]
    fn null_p_values_are_roughly_uniform() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2024);
        let groups: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let mm = one_way(&groups, 2);
        let mut ps: Vec<f64> = (0..500)
            .map(|_| {
                let y = DMatrix::from_fn(30, 3, |_, _| StandardNormal.sample(&mut rng));
                manova_pillai(&y, &mm).unwrap().terms[0].p_value
            })
            .collect();
        assert!(ks_uniform(&mut ps) < 0.1);
    }

    fn ks_uniform(ps: &mut [f64]) -> f64 {
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ps.len() as f64;
        ps.iter()
            .enumerate()
            .map(|(i, &p)| (p - i as f64 / n).abs().max(((i + 1) as f64 / n - p).abs()))
            .fold(0.0, f64::max)
    }
}

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::estimators::MethodId;
use crate::metrics::RowKey;
use crate::simulation::{SimDesign, GRID_ETA, GRID_GAMMA, GRID_P, GRID_RELPOS};
use crate::simulation::relpos_label;

/// One categorical column: level labels plus a level code per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    pub codes: Vec<usize>,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: Vec<String>, codes: Vec<usize>) -> Result<Self> {
        let name = name.into();
        if let Some(&c) = codes.iter().find(|&&c| c >= levels.len()) {
            return Err(invalid!("factor `{name}` has code {c} but only {} levels", levels.len()));
        }
        Ok(Factor { name, levels, codes })
    }
}

/// Factor columns aligned with the rows of `u` / `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorFrame {
    pub factors: Vec<Factor>,
    pub rows: usize,
}

pub const STUDY_FACTORS: [&str; 5] = ["p", "gamma", "eta", "relpos", "method"];

impl FactorFrame {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let rows = factors.first().map_or(0, |f| f.codes.len());
        if let Some(f) = factors.iter().find(|f| f.codes.len() != rows) {
            return Err(Error::DimensionMismatch(format!(
                "factor `{}` has {} rows, expected {rows}",
                f.name,
                f.codes.len()
            )));
        }
        Ok(FactorFrame { factors, rows })
    }

    /// The five study factors for each key. Levels come from the grid;
    /// methods keep only the ones present, in reporting order.
    pub fn from_keys(keys: &[RowKey], designs: &[SimDesign]) -> Result<Self> {
        let by_id: BTreeMap<u32, &SimDesign> = designs.iter().map(|d| (d.design_id, d)).collect();
        let mut present: Vec<MethodId> = keys.iter().map(|k| k.method).collect();
        present.sort();
        present.dedup();
        let mut codes = (0..5).map(|_| Vec::with_capacity(keys.len())).collect::<Vec<_>>();
        for k in keys {
            let d = by_id
                .get(&k.design_id)
                .ok_or_else(|| invalid!("row key refers to unknown design {}", k.design_id))?;
            let lv = [d.p_level(), d.gamma_level(), d.eta_level(), d.relpos_level()];
            for (i, l) in lv.into_iter().enumerate() {
                codes[i].push(l.ok_or_else(|| invalid!("design {} is not a grid design", d.design_id))?);
            }
            codes[4].push(present.binary_search(&k.method).expect("method collected above"));
        }
        let labels: [Vec<String>; 5] = [
            GRID_P.iter().map(|v| v.to_string()).collect(),
            GRID_GAMMA.iter().map(|v| v.to_string()).collect(),
            GRID_ETA.iter().map(|v| v.to_string()).collect(),
            GRID_RELPOS.iter().map(|r| relpos_label(r)).collect(),
            present.iter().map(|m| m.name().to_string()).collect(),
        ];
        let factors = STUDY_FACTORS
            .iter()
            .zip(labels)
            .zip(codes)
            .map(|((name, levels), codes)| Factor::new(*name, levels, codes))
            .collect::<Result<Vec<_>>>()?;
        FactorFrame::new(factors)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| invalid!("no factor named `{name}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub label: String,
    /// Indices into the frame's factors.
    pub factors: Vec<usize>,
    pub columns: Range<usize>,
}

impl Term {
    pub fn df(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone)]
pub struct ModelMatrix {
    pub x: DMatrix<f64>,
    /// Terms in column order, intercept first.
    pub terms: Vec<Term>,
}

/// Treatment-coded design matrix with all interactions up to `max_order`.
/// Column order: intercept, main effects, then 2-way, 3-way, ... terms,
/// each group in lexicographic order of factor positions.
pub fn build_model_matrix(frame: &FactorFrame, max_order: usize) -> Result<ModelMatrix> {
    let n = frame.rows;
    let k = frame.factors.len();
    if let Some(f) = frame.factors.iter().find(|f| f.levels.len() < 2) {
        return Err(invalid!("factor `{}` needs at least two levels", f.name));
    }
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut terms = vec![Term { label: "(Intercept)".into(), factors: vec![], columns: 0..1 }];
    for order in 1..=max_order.min(k) {
        for combo in combinations(k, order) {
            let start = cols.len();
            // non-reference level tuples, first factor varying slowest
            let mut tuples: Vec<Vec<usize>> = vec![vec![]];
            for &f in &combo {
                let nl = frame.factors[f].levels.len();
                tuples = tuples
                    .into_iter()
                    .flat_map(|t| {
                        (1..nl).map(move |l| {
                            let mut t = t.clone();
                            t.push(l);
                            t
                        })
                    })
                    .collect();
            }
            for t in tuples {
                let col = (0..n)
                    .map(|i| {
                        let hit = combo.iter().zip(&t).all(|(&f, &l)| frame.factors[f].codes[i] == l);
                        if hit { 1.0 } else { 0.0 }
                    })
                    .collect();
                cols.push(col);
            }
            let label = combo.iter().map(|&f| frame.factors[f].name.as_str()).collect::<Vec<_>>().join(":");
            terms.push(Term { label, factors: combo, columns: start..cols.len() });
        }
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    check_rank(&x, &terms)?;
    Ok(ModelMatrix { x, terms })
}

/// Index tuples `i1 < i2 < ... < ik` from `0..n`, lexicographic.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Unpivoted QR: the first column whose diagonal entry collapses is
/// spanned by earlier columns and names the offending term.
fn check_rank(x: &DMatrix<f64>, terms: &[Term]) -> Result<()> {
    let (n, p) = x.shape();
    if n < p {
        let last = terms.last().map_or("(Intercept)", |t| t.label.as_str());
        return Err(Error::RankDeficient(format!("{last} ({p} columns for {n} rows)")));
    }
    let r = x.clone().qr().unpack_r();
    for j in 0..p {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm.max(1.0) {
            let t = terms.iter().find(|t| t.columns.contains(&j)).expect("every column has a term");
            return Err(Error::RankDeficient(t.label.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::design_grid;

    fn full_keys(reps: u32) -> Vec<RowKey> {
        let mut keys = Vec::new();
        for d in 1..=32 {
            for m in MethodId::COMPARED {
                for r in 1..=reps {
                    keys.push(RowKey { design_id: d, method: m, replicate: r });
                }
            }
        }
        keys
    }

    #[test]
    fn term_layout_on_full_grid() {
        let frame = FactorFrame::from_keys(&full_keys(2), &design_grid()).unwrap();
        let mm = build_model_matrix(&frame, 3).unwrap();
        let main: usize = mm.terms.iter().filter(|t| t.factors.len() == 1).map(|t| t.df()).sum();
        assert_eq!(main, 10);
        assert_eq!(mm.terms.iter().filter(|t| t.factors.len() == 3).count(), 10);
        assert_eq!(mm.terms.iter().filter(|t| t.factors.len() == 2).count(), 10);
        let labels: Vec<&str> = mm.terms.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(&labels[..7], &["(Intercept)", "p", "gamma", "eta", "relpos", "method", "p:gamma"]);
        assert_eq!(*labels.last().unwrap(), "eta:relpos:method");
        assert_eq!(mm.x.ncols(), 1 + 10 + 36 + 58);
        // contiguous, ordered column ranges
        for w in mm.terms.windows(2) {
            assert_eq!(w[0].columns.end, w[1].columns.start);
        }
    }

    #[test]
    fn rank_deficiency_names_the_term() {
        // two identical factors: the second main effect is aliased
        let codes = vec![0, 1, 0, 1, 0, 1];
        let lv = vec!["a".to_string(), "b".to_string()];
        let frame = FactorFrame::new(vec![
            Factor::new("f", lv.clone(), codes.clone()).unwrap(),
            Factor::new("g", lv, codes).unwrap(),
        ])
        .unwrap();
        match build_model_matrix(&frame, 1) {
            Err(Error::RankDeficient(t)) => assert_eq!(t, "g"),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn unknown_design_rejected() {
        let keys = [RowKey { design_id: 99, method: MethodId::Pcr, replicate: 1 }];
        assert!(FactorFrame::from_keys(&keys, &design_grid()).is_err());
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(5, 3).len(), 10);
    }
}

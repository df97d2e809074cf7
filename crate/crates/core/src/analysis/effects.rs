use nalgebra::DMatrix;

use super::model::FactorFrame;
use super::pca::pca_scores;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EffectCell {
    pub levels: Vec<String>,
    pub count: usize,
    /// Aligned with [`EffectTable::columns`]; `NaN` for empty cells.
    pub mean: Vec<f64>,
    /// Standard error of the mean; `NaN` below two observations.
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectTable {
    pub factors: Vec<String>,
    /// `"PC1"` followed by the raw column names.
    pub columns: Vec<String>,
    pub cells: Vec<EffectCell>,
}

impl EffectTable {
    pub fn empty_cells(&self) -> Vec<&EffectCell> {
        self.cells.iter().filter(|c| c.count == 0).collect()
    }
}

/// Cell means of the first principal score and of every raw column over the
/// cross of `factors`, ordered by level with the first factor slowest.
/// Empty cells stay in the table with a zero count.
pub fn effect_means(data: &DMatrix<f64>, names: &[String], frame: &FactorFrame, factors: &[&str]) -> Result<EffectTable> {
    if data.nrows() != frame.rows {
        return Err(Error::DimensionMismatch(format!("{} data rows vs {} factor rows", data.nrows(), frame.rows)));
    }
    if names.len() != data.ncols() {
        return Err(invalid!("{} column names for {} columns", names.len(), data.ncols()));
    }
    if factors.is_empty() {
        return Err(invalid!("no factors requested"));
    }
    let idx = factors.iter().map(|f| frame.index_of(f)).collect::<Result<Vec<_>>>()?;
    let pc1 = pca_scores(data)?.scores.column(0).into_owned();
    let mut values = DMatrix::zeros(data.nrows(), data.ncols() + 1);
    values.set_column(0, &pc1);
    values.columns_mut(1, data.ncols()).copy_from(data);

    let sizes: Vec<usize> = idx.iter().map(|&i| frame.factors[i].levels.len()).collect();
    let ncell: usize = sizes.iter().product();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ncell];
    for row in 0..frame.rows {
        let mut cell = 0;
        for (&i, &s) in idx.iter().zip(&sizes) {
            cell = cell * s + frame.factors[i].codes[row];
        }
        members[cell].push(row);
    }
    let ncol = values.ncols();
    let cells = members
        .iter()
        .enumerate()
        .map(|(cell, rows)| {
            let mut rem = cell;
            let mut levels = vec![String::new(); idx.len()];
            for k in (0..idx.len()).rev() {
                levels[k] = frame.factors[idx[k]].levels[rem % sizes[k]].clone();
                rem /= sizes[k];
            }
            let cnt = rows.len() as f64;
            let mut mean = vec![f64::NAN; ncol];
            let mut se = vec![f64::NAN; ncol];
            for j in 0..ncol {
                if rows.is_empty() {
                    continue;
                }
                let mu = rows.iter().map(|&r| values[(r, j)]).sum::<f64>() / cnt;
                mean[j] = mu;
                if rows.len() > 1 {
                    let var = rows.iter().map(|&r| (values[(r, j)] - mu).powi(2)).sum::<f64>() / (cnt - 1.0);
                    se[j] = (var / cnt).sqrt();
                }
            }
            EffectCell { levels, count: rows.len(), mean, se }
        })
        .collect();
    let mut columns = vec!["PC1".to_string()];
    columns.extend(names.iter().cloned());
    Ok(EffectTable { factors: factors.iter().map(|s| s.to_string()).collect(), columns, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::model::Factor;

    fn toy() -> (DMatrix<f64>, FactorFrame) {
        let data = DMatrix::from_row_slice(8, 2, &[1.0, 2.0, 2.0, 1.0, 3.0, 5.0, 4.0, 3.0, 0.5, 0.0, 1.5, 2.5, 6.0, 1.0, 2.0, 2.0]);
        let lv = |k: usize| (0..k).map(|i| format!("L{i}")).collect::<Vec<_>>();
        let frame = FactorFrame::new(vec![
            Factor::new("a", lv(2), vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap(),
            Factor::new("b", lv(3), vec![0, 1, 0, 1, 0, 1, 0, 1]).unwrap(),
        ])
        .unwrap();
        (data, frame)
    }

    fn names() -> Vec<String> {
        vec!["u1".into(), "u2".into()]
    }

    #[test]
    fn single_cell_is_sample_mean() {
        let (data, mut frame) = toy();
        frame.factors[0].codes = vec![0; 8];
        let t = effect_means(&data, &names(), &frame, &["a"]).unwrap();
        assert_eq!(t.cells[0].count, 8);
        assert!((t.cells[0].mean[1] - data.column(0).mean()).abs() < 1e-12);
        assert!(t.cells[0].mean[0].abs() < 1e-12, "PC scores are centered");
        assert_eq!(t.cells[1].count, 0);
        assert!(t.cells[1].mean[1].is_nan());
    }

    #[test]
    fn balanced_grand_mean_and_ordering() {
        let (data, frame) = toy();
        let t = effect_means(&data, &names(), &frame, &["a", "b"]).unwrap();
        assert_eq!(t.cells.len(), 6);
        assert_eq!(t.cells[1].levels, vec!["L0".to_string(), "L1".to_string()]);
        assert_eq!(t.empty_cells().len(), 2);
        for j in 0..3 {
            let grand = if j == 0 { 0.0 } else { data.column(j - 1).mean() };
            let weighted: f64 =
                t.cells.iter().filter(|c| c.count > 0).map(|c| c.mean[j] * c.count as f64).sum::<f64>() / 8.0;
            assert!((weighted - grand).abs() < 1e-10);
        }
        let filled: Vec<_> = t.cells.iter().filter(|c| c.count > 0).collect();
        let mean_of_means: f64 = filled.iter().map(|c| c.mean[1]).sum::<f64>() / filled.len() as f64;
        assert!((mean_of_means - data.column(0).mean()).abs() < 1e-12);
    }

    #[test]
    fn unknown_factor_rejected() {
        let (data, frame) = toy();
        assert!(effect_means(&data, &names(), &frame, &["zz"]).is_err());
    }
}

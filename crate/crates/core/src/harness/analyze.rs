use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;

use super::io::{self, read_wide, U_SCHEMA, V_SCHEMA};
use super::run::{RECORDS_FILE, U_FILE, V_FILE};
use crate::analysis::{
    build_model_matrix, effect_means, format_value, manova_pillai, pca_scores, summary_table, EffectTable, FactorFrame,
    ManovaTable, PcaSummary, SummaryRow,
};
use crate::error::{Error, Result};
use crate::estimators::MethodId;
use crate::metrics::RowKey;
use crate::simulation::design_grid;

/// Effect tables written by [`analyze_results`].
pub const EFFECT_TERMS: [&[&str]; 4] = [&["method"], &["method", "gamma", "relpos"], &["method", "eta"], &["method", "p"]];

#[derive(Debug, Clone)]
pub struct DatasetAnalysis {
    pub pca: PcaSummary,
    /// `None` when the stored designs do not support the full model.
    pub manova: Option<ManovaTable>,
    pub manova_note: Option<String>,
    pub effects: Vec<EffectTable>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    /// Error dataset `u`.
    pub errors: DatasetAnalysis,
    /// Component dataset `v`.
    pub components: DatasetAnalysis,
}

fn require(dir: &Path, file: &str) -> Result<std::path::PathBuf> {
    let p = dir.join(file);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::NoResults(dir.display().to_string()))
    }
}

/// Factors with a single observed level carry no contrast and are dropped.
fn informative_frame(frame: FactorFrame) -> Result<FactorFrame> {
    let kept = frame
        .factors
        .into_iter()
        .filter(|f| {
            let first = f.codes.first().copied();
            f.codes.iter().any(|&c| Some(c) != first)
        })
        .collect();
    FactorFrame::new(kept)
}

fn analyze_one(keys: &[RowKey], data: &DMatrix<f64>, prefix: &str) -> Result<DatasetAnalysis> {
    let frame = FactorFrame::from_keys(keys, &design_grid())?;
    let pca = pca_scores(data)?;
    let names: Vec<String> = (1..=data.ncols()).map(|j| format!("{prefix}{j}")).collect();
    let (manova, manova_note) = match informative_frame(frame.clone())
        .and_then(|f| build_model_matrix(&f, 3))
        .and_then(|mm| manova_pillai(&pca.scores, &mm))
    {
        Ok(t) => (Some(t), None),
        Err(e) => {
            log::warn!("MANOVA on {prefix} skipped: {e}");
            (None, Some(e.to_string()))
        }
    };
    let effects = EFFECT_TERMS
        .iter()
        .map(|term| effect_means(data, &names, &frame, term))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetAnalysis { pca, manova, manova_note, effects })
}

/// PCA, MANOVA and effect means on the stored `u` and `v`, written next to
/// them.
pub fn analyze_results(dir: &Path) -> Result<AnalysisOutput> {
    let (ku, u) = read_wide(&require(dir, U_FILE)?, U_SCHEMA)?;
    let (kv, v) = read_wide(&require(dir, V_FILE)?, V_SCHEMA)?;
    if ku != kv {
        return Err(Error::Parse("u and v row keys differ".into()));
    }
    let errors = analyze_one(&ku, &u, "u")?;
    let components = analyze_one(&kv, &v, "v")?;
    for (name, a) in [("u", &errors), ("v", &components)] {
        write_scores(&dir.join(format!("scores_{name}.csv")), &ku, &a.pca)?;
        write_pca(&dir.join(format!("pca_{name}.csv")), &a.pca)?;
        if let Some(t) = &a.manova {
            write_manova(&dir.join(format!("manova_{name}.csv")), t)?;
        }
        for t in &a.effects {
            write_effects(&dir.join(format!("effects_{name}_{}.csv", t.factors.join("_"))), t)?;
        }
    }
    Ok(AnalysisOutput { errors, components })
}

fn write_scores(path: &Path, keys: &[RowKey], pca: &PcaSummary) -> Result<()> {
    let grid = design_grid();
    io::write_atomic(path, |out| {
        writeln!(out, "# mrcompare scores v1")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["design_id", "method", "replicate", "p", "gamma", "eta", "relpos"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=pca.scores.ncols()).map(|k| format!("t{k}")));
        w.write_record(&header)?;
        for (i, k) in keys.iter().enumerate() {
            let d = &grid[k.design_id as usize - 1];
            let mut row = vec![
                k.design_id.to_string(),
                k.method.to_string(),
                k.replicate.to_string(),
                d.p.to_string(),
                d.gamma.to_string(),
                d.eta.to_string(),
                d.relpos_label(),
            ];
            row.extend(pca.scores.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn write_pca(path: &Path, pca: &PcaSummary) -> Result<()> {
    io::write_atomic(path, |out| {
        writeln!(out, "# mrcompare pca v1")?;
        let mut w = csv::Writer::from_writer(out);
        let m = pca.loadings.nrows();
        let mut header = vec!["component".to_string(), "explained".into()];
        header.extend((1..=m).map(|j| format!("loading{j}")));
        w.write_record(&header)?;
        for k in 0..pca.loadings.ncols() {
            let mut row = vec![(k + 1).to_string(), pca.explained[k].to_string()];
            row.extend(pca.loadings.column(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn write_manova(path: &Path, t: &ManovaTable) -> Result<()> {
    io::write_atomic(path, |out| {
        writeln!(out, "# mrcompare manova v1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term", "df", "pillai", "F", "df1", "df2", "p"])?;
        for r in &t.terms {
            w.write_record([
                r.term.clone(),
                r.df.to_string(),
                r.pillai.to_string(),
                r.approx_f.to_string(),
                r.df1.to_string(),
                r.df2.to_string(),
                r.p_value.to_string(),
            ])?;
        }
        w.write_record(["Residuals".to_string(), t.residual_df.to_string(), String::new(), String::new(), String::new(), String::new(), String::new()])?;
        w.flush()?;
        Ok(())
    })
}

fn write_effects(path: &Path, t: &EffectTable) -> Result<()> {
    io::write_atomic(path, |out| {
        writeln!(out, "# mrcompare effects v1")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = t.factors.clone();
        header.push("count".into());
        for c in &t.columns {
            header.push(format!("{c}_mean"));
            header.push(format!("{c}_se"));
        }
        w.write_record(&header)?;
        for cell in &t.cells {
            let mut row = cell.levels.clone();
            row.push(cell.count.to_string());
            for (m, s) in cell.mean.iter().zip(&cell.se) {
                row.push(m.to_string());
                row.push(s.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Gaussian kernel density on `points` grid nodes with Silverman's bandwidth.
pub fn kernel_density(values: &[f64], points: usize) -> Vec<(f64, f64)> {
    let n = values.len();
    if n == 0 || points < 2 {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |f: f64| sorted[((n - 1) as f64 * f).round() as usize];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = if spread > 0.0 { 0.9 * spread * (n as f64).powf(-0.2) } else { 1e-3_f64.max(mean.abs() * 1e-3) };
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[n - 1] + 3.0 * h;
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let d = values.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>() * norm;
            (x, d)
        })
        .collect()
}

/// Table-of-minima summary for `designs` (default: every stored design) plus per-method densities of the
/// first principal score of `u` and `v`.
pub fn report_results(dir: &Path, designs: Option<&[u32]>) -> Result<Vec<SummaryRow>> {
    let records = io::read_records(&require(dir, RECORDS_FILE)?)?;
    let stored: Vec<u32> = records.iter().map(|r| r.design_id).collect::<BTreeSet<_>>().into_iter().collect();
    let rows = summary_table(&records, designs.unwrap_or(&stored))?;
    io::write_atomic(&dir.join("summary.csv"), |out| {
        writeln!(out, "# mrcompare summary v1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["design_id", "response", "method", "prediction", "estimation", "pred_value", "pred_l", "est_value", "est_l"])?;
        for r in &rows {
            w.write_record([
                r.design_id.to_string(),
                r.response.to_string(),
                r.method.to_string(),
                r.prediction.format(),
                r.estimation.format(),
                r.prediction.value.to_string(),
                r.prediction.l.to_string(),
                r.estimation.value.to_string(),
                r.estimation.l.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    io::write_atomic(&dir.join("summary.txt"), |out| {
        out.write_all(render_summary(&rows).as_bytes())?;
        Ok(())
    })?;
    for (file, schema, name) in [(U_FILE, U_SCHEMA, "u"), (V_FILE, V_SCHEMA, "v")] {
        let Ok(path) = require(dir, file) else { continue };
        let (keys, data) = read_wide(&path, schema)?;
        let pca = match pca_scores(&data) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("no score densities for {name}: {e}");
                continue;
            }
        };
        io::write_atomic(&dir.join(format!("density_{name}.csv")), |out| {
            writeln!(out, "# mrcompare density v1")?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["method", "score", "density"])?;
            for m in MethodId::COMPARED {
                let vals: Vec<f64> =
                    keys.iter().enumerate().filter(|(_, k)| k.method == m).map(|(i, _)| pca.scores[(i, 0)]).collect();
                for (x, d) in kernel_density(&vals, 128) {
                    w.write_record([m.to_string(), x.to_string(), d.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
    }
    Ok(rows)
}

/// Plain-text table: one block per design, one line per response and
/// method, prediction then estimation minima.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let mut last = None;
    for r in rows {
        if last != Some(r.design_id) {
            let d = &design_grid()[r.design_id as usize - 1];
            s += &format!(
                "design {} (p={}, gamma={}, eta={}, relpos={})\n{:>8}  {:<6}{:>14}{:>14}\n",
                r.design_id,
                d.p,
                format_value(d.gamma),
                format_value(d.eta),
                d.relpos_label(),
                "response",
                "method",
                "prediction",
                "estimation"
            );
            last = Some(r.design_id);
        }
        s += &format!("{:>8}  {:<6}{:>14}{:>14}\n", r.response, r.method.name(), r.prediction.format(), r.estimation.format());
    }
    s
}

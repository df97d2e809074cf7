//! Versioned CSV files. Every file starts with a `# mrcompare <kind> v1`
//! line followed by an ordinary header row.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::CoefficientPath;
use crate::metrics::{ErrorRecord, RowKey};
use crate::simulation::{relpos_label, SimDesign};

pub const RECORDS_SCHEMA: &str = "# mrcompare records v1";
pub const U_SCHEMA: &str = "# mrcompare u v1";
pub const V_SCHEMA: &str = "# mrcompare v v1";
pub const DESIGNS_SCHEMA: &str = "# mrcompare designs v1";
pub const PATHS_SCHEMA: &str = "# mrcompare paths v1";

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn open_schema(path: &Path, schema: &str) -> Result<BufReader<File>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut first = String::new();
    r.read_line(&mut first)?;
    if first.trim_end() != schema {
        return Err(Error::Parse(format!(
            "{}: expected schema line `{schema}`, found `{}`",
            path.display(),
            first.trim_end()
        )));
    }
    Ok(r)
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

pub fn write_records_to(out: &mut dyn Write, records: &[ErrorRecord]) -> Result<()> {
    writeln!(out, "{RECORDS_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[ErrorRecord]) -> Result<()> {
    write_atomic(path, |out| write_records_to(out, records))
}

pub fn read_records(path: &Path) -> Result<Vec<ErrorRecord>> {
    read_records_from(open_schema(path, RECORDS_SCHEMA)?).map_err(|e| parse_err(path, e))
}

fn read_records_from(r: impl Read) -> Result<Vec<ErrorRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// One row per key, columns `<prefix>1..<prefix>m`.
pub fn write_wide(path: &Path, schema: &str, prefix: &str, keys: &[RowKey], values: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "{schema}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["design_id".to_string(), "method".into(), "replicate".into()];
        header.extend((1..=values.ncols()).map(|j| format!("{prefix}{j}")));
        w.write_record(&header)?;
        for (i, k) in keys.iter().enumerate() {
            let mut row = vec![k.design_id.to_string(), k.method.to_string(), k.replicate.to_string()];
            row.extend(values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn read_wide(path: &Path, schema: &str) -> Result<(Vec<RowKey>, DMatrix<f64>)> {
    let r = open_schema(path, schema)?;
    let mut rd = csv::Reader::from_reader(r);
    let m = rd.headers()?.len().saturating_sub(3);
    let mut keys = Vec::new();
    let mut vals = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != m + 3 {
            return Err(parse_err(path, format!("row has {} fields, expected {}", rec.len(), m + 3)));
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        keys.push(RowKey {
            design_id: field(0).parse().map_err(|e| parse_err(path, e))?,
            method: field(1).parse()?,
            replicate: field(2).parse().map_err(|e| parse_err(path, e))?,
        });
        for j in 0..m {
            vals.push(field(3 + j).parse::<f64>().map_err(|e| parse_err(path, e))?);
        }
    }
    let n = keys.len();
    Ok((keys, DMatrix::from_row_slice(n, m, &vals)))
}

pub fn write_design_key(path: &Path, designs: &[SimDesign]) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "{DESIGNS_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["design_id", "p", "gamma", "eta", "relpos"])?;
        for d in designs {
            w.write_record([
                d.design_id.to_string(),
                d.p.to_string(),
                d.gamma.to_string(),
                d.eta.to_string(),
                relpos_label(&d.relpos),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Long format: one row per coefficient.
pub fn write_coefficient_path(path: &Path, design_id: u32, replicate: u32, cp: &CoefficientPath<f64>) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "{PATHS_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["design_id", "method", "replicate", "l", "response", "predictor", "coefficient"])?;
        for (l, b) in cp.coef.iter().enumerate() {
            for j in 0..b.ncols() {
                for i in 0..b.nrows() {
                    w.write_record([
                        design_id.to_string(),
                        cp.method.to_string(),
                        replicate.to_string(),
                        l.to_string(),
                        (j + 1).to_string(),
                        (i + 1).to_string(),
                        b[(i, j)].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })
}

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::MethodId;
use crate::metrics::{average_error_path, select_common_component, ErrorKind, ErrorRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinError {
    pub value: f64,
    pub l: usize,
}

impl MinError {
    /// `"6.65 (1)"`: two decimals, trailing zeros trimmed.
    pub fn format(&self) -> String {
        format!("{} ({})", format_value(self.value), self.l)
    }
}

pub fn format_value(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.2}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" { "0".into() } else { s.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub design_id: u32,
    pub response: u32,
    pub method: MethodId,
    pub prediction: MinError,
    pub estimation: MinError,
}

type ReplicatePaths<'a> = BTreeMap<u32, BTreeMap<u32, &'a ErrorRecord>>;

/// Minimum replicate-averaged errors and their component counts for each
/// requested design, response and method.
pub fn summary_table(records: &[ErrorRecord], designs: &[u32]) -> Result<Vec<SummaryRow>> {
    let wanted: BTreeSet<u32> = designs.iter().copied().collect();
    // (design, response, method) -> replicate -> l -> record
    // (design, response, method) -> replicate -> l -> record
    let mut g: BTreeMap<(u32, u32, MethodId), ReplicatePaths> = BTreeMap::new();
    for r in records.iter().filter(|r| wanted.contains(&r.design_id)) {
        g.entry((r.design_id, r.response, r.method)).or_default().entry(r.replicate).or_default().insert(r.l, r);
    }
    let methods: BTreeSet<MethodId> = g.keys().map(|k| k.2).collect();
    let responses: BTreeSet<u32> = g.keys().map(|k| k.1).collect();
    let mut missing = Vec::new();
    for d in &wanted {
        for j in &responses {
            for m in &methods {
                if !g.contains_key(&(*d, *j, *m)) {
                    missing.push(format!("design {d} response {j} {m}"));
                }
            }
        }
        if methods.is_empty() {
            missing.push(format!("design {d}"));
        }
    }
    let mut rows = Vec::new();
    for ((d, j, m), reps) in &g {
        let lset: BTreeSet<u32> = reps.values().flat_map(|p| p.keys().copied()).collect();
        if reps.values().any(|p| p.len() != lset.len()) {
            missing.push(format!("design {d} response {j} {m}: uneven component paths"));
            continue;
        }
        let pick = |kind: ErrorKind| -> Result<MinError> {
            let paths: Vec<Vec<f64>> = reps.values().map(|p| p.values().map(|r| r.value(kind)).collect()).collect();
            let avg = average_error_path(&paths)?;
            let l = select_common_component(&avg);
            Ok(MinError { value: avg[l], l })
        };
        rows.push(SummaryRow {
            design_id: *d,
            response: *j,
            method: *m,
            prediction: pick(ErrorKind::Prediction)?,
            estimation: pick(ErrorKind::Estimation)?,
        });
    }
    if !missing.is_empty() {
        return Err(Error::Incomplete(missing.join("; ")));
    }
    Ok(rows)
}

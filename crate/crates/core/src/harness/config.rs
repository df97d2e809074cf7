use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{FitConfig, MethodId};
use crate::simulation::{design_grid, relpos_label, SimDesign};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub designs: Vec<u32>,
    pub replicates: u32,
    pub methods: Vec<MethodId>,
    pub lmax: usize,
    pub senv_response_dim: usize,
    pub base_seed: u64,
    pub share_datasets_across_methods: bool,
    pub parallel_width: usize,
    pub output_dir: PathBuf,
    /// Also write every coefficient path (large for wide designs).
    pub export_paths: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            designs: (1..=32).collect(),
            replicates: 50,
            methods: MethodId::COMPARED.to_vec(),
            lmax: 10,
            senv_response_dim: 2,
            base_seed: 0,
            share_datasets_across_methods: false,
            parallel_width: std::thread::available_parallelism().map_or(1, |n| n.get()),
            output_dir: PathBuf::from("results"),
            export_paths: false,
        }
    }
}

pub const CONFIG_KEYS: [&str; 10] = [
    "designs",
    "replicates",
    "methods",
    "lmax",
    "senv_response_dim",
    "base_seed",
    "share_datasets_across_methods",
    "parallel_width",
    "output_dir",
    "export_paths",
];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(invalid!("replicates must be at least 1"));
        }
        if self.lmax == 0 {
            return Err(invalid!("lmax must be at least 1"));
        }
        if self.senv_response_dim == 0 {
            return Err(invalid!("senv_response_dim must be at least 1"));
        }
        if self.parallel_width == 0 {
            return Err(invalid!("parallel_width must be at least 1"));
        }
        if self.designs.is_empty() || self.methods.is_empty() {
            return Err(invalid!("at least one design and one method are required"));
        }
        if let Some(d) = self.designs.iter().find(|&&d| !(1..=32).contains(&d)) {
            return Err(invalid!("design {d} does not exist (valid: 1..=32)"));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { lmax: self.lmax, senv_response_dim: self.senv_response_dim, ..FitConfig::default() }
    }

    pub fn selected_designs(&self) -> Vec<SimDesign> {
        design_grid().into_iter().filter(|d| self.designs.contains(&d.design_id)).collect()
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let num = |what: &str| -> Result<u64> {
            value.parse::<u64>().map_err(|_| invalid!("{what}: expected a non-negative integer, got `{value}`"))
        };
        match key.trim() {
            "designs" => self.designs = parse_designs(value)?,
            "replicates" => self.replicates = u32::try_from(num(key)?).map_err(|_| invalid!("replicates too large"))?,
            "methods" => self.methods = parse_methods(value)?,
            "lmax" => self.lmax = num(key)? as usize,
            "senv_response_dim" => self.senv_response_dim = num(key)? as usize,
            "base_seed" => self.base_seed = num(key)?,
            "share_datasets_across_methods" => self.share_datasets_across_methods = parse_bool(key, value)?,
            "parallel_width" => self.parallel_width = num(key)? as usize,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "export_paths" => self.export_paths = parse_bool(key, value)?,
            other => return Err(invalid!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Applies a `key = value` file. `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_str(&text).map_err(|e| match e {
            Error::InvalidArgument(m) | Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`, got `{line}`", no + 1)))?;
            self.set(k, v).map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid!("{key}: expected true or false, got `{value}`")),
    }
}

pub fn parse_methods(value: &str) -> Result<Vec<MethodId>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(MethodId::COMPARED.to_vec());
    }
    let mut out = Vec::new();
    for tok in value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let m: MethodId = tok.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(invalid!("empty method list"));
    }
    out.sort();
    Ok(out)
}

/// Design selection. Accepts `all`, ids and ranges (`1,4,9-12`), the
/// shorthands `9-like` and `29-like`, or a factor filter such as
/// `p=20,gamma=0.9,relpos=5:8,eta=0`.
pub fn parse_designs(value: &str) -> Result<Vec<u32>> {
    let value = value.trim();
    if value.contains('=') {
        return filter_designs(value);
    }
    let mut ids = Vec::new();
    for tok in value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.to_ascii_lowercase().as_str() {
            "all" => ids.extend(1..=32),
            "9-like" => ids.extend(filter_designs("p=20,gamma=0.9,relpos=5:8,eta=0")?),
            "29-like" => ids.extend(filter_designs("p=20,gamma=0.9,relpos=5:8,eta=1.2")?),
            t => {
                let (a, b) = match t.split_once('-') {
                    Some((a, b)) => (a, b),
                    None => (t, t),
                };
                let a: u32 = a.parse().map_err(|_| invalid!("bad design selector `{tok}`"))?;
                let b: u32 = b.parse().map_err(|_| invalid!("bad design selector `{tok}`"))?;
                if a == 0 || b > 32 || a > b {
                    return Err(invalid!("design range `{tok}` outside 1..=32"));
                }
                ids.extend(a..=b);
            }
        }
    }
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(invalid!("empty design selection"));
    }
    Ok(ids)
}

fn filter_designs(filter: &str) -> Result<Vec<u32>> {
    let mut grid = design_grid();
    for clause in filter.split(',').map(str::trim).filter(|c| !c.is_empty()) {
        let (k, v) = clause.split_once('=').ok_or_else(|| invalid!("bad design filter `{clause}`"))?;
        let v = v.trim();
        let num = || v.parse::<f64>().map_err(|_| invalid!("bad value in design filter `{clause}`"));
        match k.trim() {
            "p" => {
                let x = num()?;
                grid.retain(|d| d.p as f64 == x);
            }
            "gamma" => {
                let x = num()?;
                grid.retain(|d| d.gamma == x);
            }
            "eta" => {
                let x = num()?;
                grid.retain(|d| d.eta == x);
            }
            "relpos" => grid.retain(|d| relpos_label(&d.relpos) == v),
            other => return Err(invalid!("unknown design factor `{other}`")),
        }
    }
    if grid.is_empty() {
        return Err(invalid!("no design matches `{filter}`"));
    }
    Ok(grid.into_iter().map(|d| d.design_id).collect())
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::{self, U_SCHEMA, V_SCHEMA};
use super::seed::{derive_seed, POPULATION_STREAM, SHARED_STREAM};
use crate::error::{Error, Result};
use crate::estimators::{fit_method, MethodId};
use crate::metrics::{assemble_component_dataset, assemble_error_dataset, path_errors, ComponentDataset, ErrorDataset, ErrorRecord};
use crate::simulation::{assemble_population, sample_dataset, write_dataset_csv, write_population, DatasetTag, PopulationModel, SimDesign, SimRng};

pub const RECORDS_FILE: &str = "records.csv";
pub const U_FILE: &str = "u.csv";
pub const V_FILE: &str = "v.csv";
pub const DESIGNS_FILE: &str = "designs.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TASKS_DIR: &str = "tasks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Done,
    /// Loaded from a previous partial run.
    Resumed,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub design_id: u32,
    pub method: MethodId,
    pub replicate: u32,
    pub seed: u64,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub population_seeds: BTreeMap<u32, u64>,
    pub tasks: Vec<TaskEntry>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub elapsed_secs: f64,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        io::write_atomic(&dir.join(MANIFEST_FILE), |w| {
            serde_json::to_writer_pretty(&mut *w, self)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub records: Vec<ErrorRecord>,
    pub errors: ErrorDataset,
    pub components: ComponentDataset,
}

#[derive(Debug, Clone, Copy)]
struct Task {
    design_id: u32,
    method: MethodId,
    replicate: u32,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn task_file(dir: &Path, t: &Task) -> PathBuf {
    dir.join(TASKS_DIR).join(format!("d{:02}-{}-r{:03}.csv", t.design_id, t.method, t.replicate))
}

fn data_seed(cfg: &RunConfig, t: &Task) -> u64 {
    let stream = if cfg.share_datasets_across_methods { SHARED_STREAM } else { t.method.code() };
    derive_seed(cfg.base_seed, t.design_id, stream, t.replicate)
}

fn designs_with_seed(cfg: &RunConfig) -> Vec<SimDesign> {
    cfg.selected_designs().into_iter().map(|d| SimDesign { base_seed: cfg.base_seed, ..d }).collect()
}

fn tasks_for(cfg: &RunConfig) -> Vec<Task> {
    let mut out = Vec::new();
    for &design_id in &cfg.designs {
        for &method in &cfg.methods {
            for replicate in 1..=cfg.replicates {
                out.push(Task { design_id, method, replicate });
            }
        }
    }
    out
}

fn build_populations(designs: &[SimDesign]) -> Result<BTreeMap<u32, PopulationModel<f64>>> {
    designs
        .par_iter()
        .map(|d| {
            let seed = derive_seed(d.base_seed, d.design_id, POPULATION_STREAM, 0);
            let pop = assemble_population(d, &mut SimRng::seed_from_u64(seed))?;
            Ok((d.design_id, pop))
        })
        .collect()
}

fn pool(width: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn draw(cfg: &RunConfig, design: &SimDesign, pop: &PopulationModel<f64>, t: &Task) -> Result<crate::simulation::Dataset<f64>> {
    let seed = data_seed(cfg, t);
    let method = (!cfg.share_datasets_across_methods).then_some(t.method);
    let tag = DatasetTag { design_id: t.design_id, method, replicate: t.replicate, seed };
    sample_dataset(pop, design.n, tag, &mut SimRng::seed_from_u64(seed))
}

fn run_task(cfg: &RunConfig, design: &SimDesign, pop: &PopulationModel<f64>, t: &Task) -> Result<Vec<ErrorRecord>> {
    let data = draw(cfg, design, pop, t)?;
    let path = fit_method(t.method, &data, &cfg.fit_config())?;
    if cfg.export_paths {
        let dir = cfg.output_dir.join("paths");
        let file = dir.join(format!("d{:02}-{}-r{:03}.csv", t.design_id, t.method, t.replicate));
        io::write_coefficient_path(&file, t.design_id, t.replicate, &path)?;
    }
    path_errors(&path, pop, t.design_id, t.replicate)
}

/// Loads a finished task file from an earlier run, if it is complete.
fn resume_task(dir: &Path, t: &Task, expected: usize) -> Option<Vec<ErrorRecord>> {
    let recs = io::read_records(&task_file(dir, t)).ok()?;
    let ok = recs.len() == expected
        && recs.iter().all(|r| r.design_id == t.design_id && r.method == t.method && r.replicate == t.replicate);
    ok.then_some(recs)
}

/// Runs every (design, method, replicate) task, then merges the per-task
/// files in key order into the record, `u`, `v` and design-key files.
pub fn run_study(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix = unix_now();
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(dir.join(TASKS_DIR))?;
    if cfg.export_paths {
        fs::create_dir_all(dir.join("paths"))?;
    }
    let designs = designs_with_seed(cfg);
    let by_id: BTreeMap<u32, &SimDesign> = designs.iter().map(|d| (d.design_id, d)).collect();
    let workers = pool(cfg.parallel_width)?;
    let pops = workers.install(|| build_populations(&designs))?;
    let tasks = tasks_for(cfg);
    let population_seeds = designs
        .iter()
        .map(|d| (d.design_id, derive_seed(cfg.base_seed, d.design_id, POPULATION_STREAM, 0)))
        .collect();
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        population_seeds,
        tasks: tasks
            .iter()
            .map(|t| TaskEntry {
                design_id: t.design_id,
                method: t.method,
                replicate: t.replicate,
                seed: data_seed(cfg, t),
                status: TaskStatus::Pending,
            })
            .collect(),
        started_unix,
        finished_unix: None,
        elapsed_secs: 0.0,
    };
    manifest.write(&dir)?;

    let done = AtomicUsize::new(0);
    let total = tasks.len();
    let expected = |t: &Task| pops[&t.design_id].m() * (cfg.lmax + 1);
    let results: Vec<(TaskStatus, Vec<ErrorRecord>)> = workers.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let out = if let Some(recs) = resume_task(&dir, t, expected(t)) {
                    (TaskStatus::Resumed, recs)
                } else {
                    match run_task(cfg, by_id[&t.design_id], &pops[&t.design_id], t)
                        .and_then(|recs| io::write_records(&task_file(&dir, t), &recs).map(|_| recs))
                    {
                        Ok(recs) => (TaskStatus::Done, recs),
                        Err(e) => (TaskStatus::Failed(e.to_string()), Vec::new()),
                    }
                };
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if k.is_multiple_of((total / 20).max(1)) || k == total {
                    log::info!("{k}/{total} tasks");
                }
                out
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.iter().map(|r| r.1.len()).sum());
    let mut failures = Vec::new();
    for (entry, (status, recs)) in manifest.tasks.iter_mut().zip(results) {
        if let TaskStatus::Failed(msg) = &status {
            failures.push(format!("design {} {} replicate {}: {msg}", entry.design_id, entry.method, entry.replicate));
        }
        entry.status = status;
        records.extend(recs);
    }
    manifest.finished_unix = Some(unix_now());
    manifest.elapsed_secs = started.elapsed().as_secs_f64();
    manifest.write(&dir)?;
    if !failures.is_empty() {
        return Err(Error::TasksFailed(format!("{} task(s) failed: {}", failures.len(), failures.join("; "))));
    }

    let errors = assemble_error_dataset(&records)?;
    let components = assemble_component_dataset(&records)?;
    io::write_records(&dir.join(RECORDS_FILE), &records)?;
    io::write_wide(&dir.join(U_FILE), U_SCHEMA, "u", &errors.keys, &errors.u)?;
    io::write_wide(&dir.join(V_FILE), V_SCHEMA, "v", &components.keys, &components.v)?;
    io::write_design_key(&dir.join(DESIGNS_FILE), &designs)?;
    Ok(RunOutput { manifest, records, errors, components })
}

/// Writes population files and datasets without fitting anything. Returns
/// the number of datasets written.
pub fn simulate_datasets(cfg: &RunConfig) -> Result<usize> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir.join("populations"))?;
    fs::create_dir_all(dir.join("datasets"))?;
    let designs = designs_with_seed(cfg);
    let by_id: BTreeMap<u32, &SimDesign> = designs.iter().map(|d| (d.design_id, d)).collect();
    let workers = pool(cfg.parallel_width)?;
    let pops = workers.install(|| build_populations(&designs))?;
    for (id, pop) in &pops {
        io::write_atomic(&dir.join("populations").join(format!("d{id:02}.txt")), |w| write_population(pop, w))?;
    }
    let mut tasks = tasks_for(cfg);
    if cfg.share_datasets_across_methods {
        // one dataset per replicate; name it after the first method
        let first = cfg.methods[0];
        tasks.retain(|t| t.method == first);
    }
    workers.install(|| {
        tasks.par_iter().try_for_each(|t| {
            let data = draw(cfg, by_id[&t.design_id], &pops[&t.design_id], t)?;
            let name = if cfg.share_datasets_across_methods {
                format!("d{:02}-shared-r{:03}.csv", t.design_id, t.replicate)
            } else {
                format!("d{:02}-{}-r{:03}.csv", t.design_id, t.method, t.replicate)
            };
            io::write_atomic(&dir.join("datasets").join(name), |w| write_dataset_csv(&data, w))
        })
    })?;
    io::write_design_key(&dir.join(DESIGNS_FILE), &designs)?;
    Ok(tasks.len())
}

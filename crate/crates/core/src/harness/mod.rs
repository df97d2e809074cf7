//! Orchestration of the factorial study: seeding, parallel execution,
//! persistence and the post-run analysis pipeline.

mod analyze;
mod config;
pub mod io;
mod run;
mod seed;

pub use analyze::{analyze_results, kernel_density, render_summary, report_results, AnalysisOutput, DatasetAnalysis, EFFECT_TERMS};
pub use config::{parse_designs, parse_methods, RunConfig, CONFIG_KEYS};
pub use run::{
    run_study, simulate_datasets, RunManifest, RunOutput, TaskEntry, TaskStatus, DESIGNS_FILE, MANIFEST_FILE, RECORDS_FILE,
    TASKS_DIR, U_FILE, V_FILE,
};
pub use seed::{derive_seed, POPULATION_STREAM, SHARED_STREAM};

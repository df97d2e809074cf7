use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mrcompare::harness::{analyze_results, parse_designs, report_results, run_study, simulate_datasets, RunConfig};
use mrcompare::simulation::design_grid;

#[derive(Parser)]
#[command(name = "mrcompare", version, about = "Simulation benchmark for multi-response regression estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the 32 simulation designs.
    Grid,
    /// Write populations and datasets without fitting.
    Simulate(StudyArgs),
    /// Run the study: simulate, fit, score and persist.
    Run(StudyArgs),
    /// PCA, MANOVA and effect means on stored results.
    Analyze(OutputArgs),
    /// Minimum-error tables and score densities.
    Report(ReportArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Plain-text `key = value` file supplying defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "MRCOMPARE_OUTPUT_DIR")]
    output_dir: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    out: OutputArgs,
    /// Designs to tabulate (ids, ranges, `9-like`, or factor filters).
    #[arg(long)]
    designs: Option<String>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    out: OutputArgs,
    /// `all`, ids and ranges (`1,4,9-12`), `9-like`, `29-like`, or a filter
    /// such as `p=20,gamma=0.9`.
    #[arg(long)]
    designs: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// Comma-separated: pcr, pls1, pls2, xenv, senv.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    lmax: Option<String>,
    #[arg(long)]
    senv_response_dim: Option<String>,
    #[arg(long)]
    base_seed: Option<String>,
    /// Draw one dataset per replicate and fit every method to it.
    #[arg(long)]
    share_datasets: bool,
    #[arg(long, env = "MRCOMPARE_PARALLEL_WIDTH")]
    parallel_width: Option<String>,
    /// Also write every coefficient path.
    #[arg(long)]
    export_paths: bool,
}

fn base_config(out: &OutputArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &out.config {
        cfg.apply_file(path).with_context(|| format!("reading config {}", path.display()))?;
    }
    if let Some(dir) = &out.output_dir {
        cfg.set("output_dir", dir)?;
    }
    Ok(cfg)
}

fn study_config(args: &StudyArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&args.out)?;
    let flags = [
        ("designs", &args.designs),
        ("replicates", &args.replicates),
        ("methods", &args.methods),
        ("lmax", &args.lmax),
        ("senv_response_dim", &args.senv_response_dim),
        ("base_seed", &args.base_seed),
        ("parallel_width", &args.parallel_width),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
        }
    }
    cfg.share_datasets_across_methods |= args.share_datasets;
    cfg.export_paths |= args.export_paths;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Grid => {
            println!("design_id,p,gamma,eta,relpos");
            for d in design_grid() {
                println!("{},{},{},{},{}", d.design_id, d.p, d.gamma, d.eta, d.relpos_label());
            }
        }
        Command::Simulate(args) => {
            let cfg = study_config(&args)?;
            let n = simulate_datasets(&cfg)?;
            println!("wrote {n} datasets to {}", cfg.output_dir.display());
        }
        Command::Run(args) => {
            let cfg = study_config(&args)?;
            let out = run_study(&cfg)?;
            println!(
                "{} tasks, {} rows in u and v, written to {} ({:.1}s)",
                out.manifest.tasks.len(),
                out.errors.u.nrows(),
                cfg.output_dir.display(),
                out.manifest.elapsed_secs
            );
        }
        Command::Analyze(args) => {
            let cfg = base_config(&args)?;
            let a = analyze_results(&cfg.output_dir)?;
            for (name, part) in [("u", &a.errors), ("v", &a.components)] {
                match &part.manova {
                    Some(t) => {
                        println!("MANOVA on {name} scores (residual df {})", t.residual_df);
                        println!("{:<24}{:>4}{:>10}{:>12}{:>12}", "term", "df", "pillai", "F", "p");
                        for r in &t.terms {
                            println!("{:<24}{:>4}{:>10.4}{:>12.3}{:>12.3e}", r.term, r.df, r.pillai, r.approx_f, r.p_value);
                        }
                    }
                    None => println!(
                        "MANOVA on {name} skipped: {}",
                        part.manova_note.as_deref().unwrap_or("model not estimable")
                    ),
                }
            }
            println!("analysis written to {}", cfg.output_dir.display());
        }
        Command::Report(args) => {
            let cfg = base_config(&args.out)?;
            let designs = args.designs.as_deref().map(parse_designs).transpose()?;
            let rows = report_results(&cfg.output_dir, designs.as_deref())?;
            print!("{}", mrcompare::harness::render_summary(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

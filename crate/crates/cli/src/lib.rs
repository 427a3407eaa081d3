//! Experiment runner: parses a run configuration, builds the problem, topology
//! and schedule, runs a solver and writes a CSV trace plus a JSON summary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 invalid schedule,
//! 4 numeric failure during the run.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod output;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{ConfigError, RunConfig};
pub use experiment::{Experiment, Outcome, Plan};
pub use output::{OutputPaths, Summary};

/// Overrides the output directory of every run.
pub const OUTPUT_DIR_ENV: &str = "PPS_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("run failed: {0}")]
    Runtime(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Schedule(_) => 3,
            CliError::Runtime(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses and builds a config and checks its schedule without running it.
pub fn validate_file(path: &Path) -> Result<(Experiment, Plan), CliError> {
    let cfg = load(path)?;
    let exp = Experiment::build(&cfg)?;
    let plan = exp.plan()?;
    Ok((exp, plan))
}

/// Result of one completed run.
pub struct RunReport {
    pub summary: Summary,
    pub paths: OutputPaths,
    pub outcome: Outcome,
}

/// Runs `config` and writes `name.csv`, `name.summary.json` (and
/// `name.edges.csv` if requested) under `out_dir`, or the config's own
/// output directory, or the working directory.
pub fn run_config(config: &RunConfig, default_name: &str, out_dir: Option<&Path>) -> Result<RunReport, CliError> {
    let exp = Experiment::build(config)?;
    let plan = exp.plan()?;
    let outcome = exp.run(&plan)?;
    let dir: PathBuf = out_dir.map(Path::to_path_buf).or_else(|| config.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let name = config.output.name.clone().unwrap_or_else(|| default_name.to_string());
    let paths = OutputPaths::new(&dir, &name);

    let file = File::create(&paths.trace).map_err(io_err(&paths.trace))?;
    output::write_trace(BufWriter::new(file), &outcome.trace).map_err(|e| CliError::Io(e.to_string()))?;
    if let Some(edges) = &outcome.edges {
        let file = File::create(&paths.edges).map_err(io_err(&paths.edges))?;
        output::write_edges(BufWriter::new(file), edges).map_err(|e| CliError::Io(e.to_string()))?;
    }

    let last = outcome.trace.last().expect("a run has at least the starting row");
    let finite = |v: f64| (!v.is_nan()).then_some(v);
    let summary = Summary {
        name,
        solver: serde_json::to_value(config.solver).unwrap().as_str().unwrap_or_default().to_string(),
        problem: config.problem.name().to_string(),
        fingerprint: exp.fingerprint.clone(),
        seed: config.seed,
        iterations: plan.horizon,
        final_dual_value: finite(last.dual_value),
        final_primal_gap: finite(last.primal_gap),
        final_gap: finite(last.gap),
        total_bits: last.bits,
        total_oracle_calls: last.calls,
        lipschitz: exp.lipschitz(),
        radius: exp.radius(),
        epsilon_bound: plan.epsilon,
        warnings: plan.warnings.clone(),
        notes: outcome.trace.notes.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    std::fs::write(&paths.summary, json + "\n").map_err(io_err(&paths.summary))?;
    Ok(RunReport { summary, paths, outcome })
}

/// Loads and runs the config at `path`; the file stem names the outputs,
/// which go next to the config unless a directory is given.
pub fn run_file(path: &Path, out_dir: Option<&Path>) -> Result<RunReport, CliError> {
    let cfg = load(path)?;
    let stem = path.file_stem().map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
    let beside = path.parent().filter(|p| !p.as_os_str().is_empty());
    run_config(&cfg, &stem, out_dir.or(if cfg.output.dir.is_some() { None } else { beside }))
}

/// Per-config outcomes of a sweep.
pub type SweepResults = Vec<(PathBuf, Result<RunReport, CliError>)>;

/// Runs every config matching `pattern` in parallel. Results keep the sorted
/// path order.
pub fn sweep(pattern: &str, out_dir: Option<&Path>) -> Result<SweepResults, CliError> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| CliError::Config(format!("bad pattern {pattern:?}: {e}")))?
        .filter_map(Result::ok)
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no config matches {pattern:?}")));
    }
    Ok(paths.into_par_iter().map(|p| {
        let r = run_file(&p, out_dir);
        (p, r)
    }).collect())
}

fn read_summary(trace: &Path) -> Result<Summary, CliError> {
    let path = OutputPaths::summary_for(trace);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Compares two trace files. Both need their summary sidecars, which must
/// describe the same problem.
pub fn compare_files(a: &Path, b: &Path, column: compare::Column, tolerance: f64) -> Result<compare::CompareReport, CliError> {
    let (sa, sb) = (read_summary(a)?, read_summary(b)?);
    if sa.fingerprint != sb.fingerprint {
        return Err(CliError::Config(format!(
            "traces come from different problems ({} is {}, {} is {})",
            a.display(),
            &sa.fingerprint[..12.min(sa.fingerprint.len())],
            b.display(),
            &sb.fingerprint[..12.min(sb.fingerprint.len())]
        )));
    }
    let read = |p: &Path| -> Result<_, CliError> {
        let f = File::open(p).map_err(io_err(p))?;
        output::read_trace(f).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    };
    compare::compare(&read(a)?, &read(b)?, column, tolerance).map_err(CliError::Config)
}

//! Configuration, orchestration and report emission for the `floquet` binary.
//!
//! Exit codes: 0 when every verdict passes, 1 when an invariant fails or the
//! computation hits a numerical obstruction, 2 for invalid input.

pub mod config;
pub mod pipeline;
pub mod report;

use std::path::Path;

use floquet_core::Error;

pub use config::RunConfig;
pub use report::{DecompositionReport, Verdict};

/// Environment variable capping the worker thread count.
pub const THREADS_VAR: &str = "FLOQUET_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Compute(Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidPotential(_)
            | Error::InvalidGrid(_)
            | Error::ClassViolation { .. }
            | Error::StepSizeTooLarge { .. }
            | Error::BlockTooLarge { .. }
            | Error::ModeOutOfRange { .. }
            | Error::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

/// Exit code for a finished report.
pub fn report_exit_code(report: &DecompositionReport) -> u8 {
    if report.pass {
        0
    } else {
        1
    }
}

/// Sizes the global thread pool from [`THREADS_VAR`]; unset or invalid values keep the default.
pub fn init_threads() {
    if let Some(n) = std::env::var(THREADS_VAR).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit_report(report: &DecompositionReport, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, &report.to_json()),
        None => {
            println!("{}", report.to_json());
            Ok(())
        }
    }
}

/// `decompose`: propagation, explicit decomposition and conjugation checks.
pub fn cmd_decompose(config: &Path, out: Option<&Path>, csv: Option<&Path>) -> Result<DecompositionReport, CliError> {
    let cfg = RunConfig::load(config)?;
    let prepared = cfg.prepare()?;
    let mut report = DecompositionReport::new("decompose");
    let artifacts = pipeline::decompose(&prepared, &mut report)?;
    if let Some(path) = csv.or(cfg.csv.as_deref()) {
        write_file(path, &pipeline::m2_csv(&prepared, &artifacts))?;
    }
    emit_report(&report, out.or(cfg.out.as_deref()))?;
    Ok(report)
}

/// `diagonalize`: the full chain through the middle-block diagonalization.
pub fn cmd_diagonalize(config: &Path, out: Option<&Path>, csv: Option<&Path>) -> Result<DecompositionReport, CliError> {
    let cfg = RunConfig::load(config)?;
    let prepared = cfg.prepare()?;
    let mut report = DecompositionReport::new("diagonalize");
    let (_, form) = pipeline::diagonalize(&prepared, &mut report)?;
    if let Some(path) = csv.or(cfg.csv.as_deref()) {
        write_file(path, &pipeline::tildec_csv(&prepared, &form))?;
    }
    emit_report(&report, out.or(cfg.out.as_deref()))?;
    Ok(report)
}

/// `lemmas`: brute-force scans of the lattice inequalities.
pub fn cmd_lemmas(range: usize, out: Option<&Path>) -> Result<DecompositionReport, CliError> {
    let report = pipeline::lemmas(range)?;
    emit_report(&report, out)?;
    Ok(report)
}

/// `converge`: truncation study over ascending cutoffs.
pub fn cmd_converge(config: &Path, cutoffs: &[usize], out: Option<&Path>) -> Result<DecompositionReport, CliError> {
    let cfg = RunConfig::load(config)?;
    let report = pipeline::converge(&cfg, cutoffs)?;
    emit_report(&report, out)?;
    Ok(report)
}

/// Parses a comma-separated cutoff list such as `32,48,64`.
pub fn parse_cutoffs(list: &str) -> Result<Vec<usize>, CliError> {
    list.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| CliError::Config(format!("bad cutoff {s:?}: {e}"))))
        .collect()
}

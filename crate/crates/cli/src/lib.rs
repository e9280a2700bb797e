//! Config-driven experiment runner behind the `pslab` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;

use crate::config::{ConfigError, RunConfig};
use crate::output::{write_error, write_outcome, RunInfo};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MODULE: i32 = 3;

const DEFAULT_OUT: &str = "pslab-out";

/// Command-line arguments of one run.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: String,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Result of a run: the exit status and the directory holding the artifacts.
#[derive(Clone, Debug)]
pub struct Status {
    pub code: i32,
    pub out_dir: PathBuf,
    pub message: Option<String>,
}

/// Runs one subcommand end to end. Failures are written to `error.json` in
/// the output directory and mapped to an exit code.
pub fn execute(inv: &Invocation) -> Status {
    let config = RunConfig::load(&inv.config);
    let out_dir = inv
        .out
        .clone()
        .or_else(|| config.as_ref().ok().and_then(|c| c.output_path.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let result = config.map_err(anyhow::Error::from).and_then(|c| run_config(inv, &c, &out_dir));
    match result {
        Ok(()) => Status { code: EXIT_OK, out_dir, message: None },
        Err(err) => fail(&out_dir, &err),
    }
}

fn run_config(inv: &Invocation, config: &RunConfig, out_dir: &Path) -> Result<()> {
    if let Some(cmd) = &config.command {
        if cmd != &inv.command {
            return Err(ConfigError::new("command", format!("config is for {cmd}, not {}", inv.command)).into());
        }
    }
    if !commands::COMMANDS.contains(&inv.command.as_str()) {
        return Err(ConfigError::new("command", format!("unknown command {}", inv.command)).into());
    }
    let workers = match inv.workers.or(config.workers) {
        Some(0) => return Err(ConfigError::new("workers", "must be positive").into()),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let setup = config.setup()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let outcome = pool.install(|| commands::run(&inv.command, config, &setup))?;
    let info = RunInfo {
        command: &inv.command,
        config: serde_json::to_value(config)?,
        workers,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_outcome(out_dir, &outcome, &info)?;
    Ok(())
}

fn fail(out_dir: &Path, err: &anyhow::Error) -> Status {
    let (code, name, path) = if let Some(e) = err.downcast_ref::<ConfigError>() {
        (EXIT_CONFIG, "ConfigInvalid", Some(e.path.as_str()))
    } else if let Some(e) = err.downcast_ref::<pslab_core::error::Error>() {
        (EXIT_MODULE, e.code(), None)
    } else {
        (EXIT_IO, "IoError", None)
    };
    let message = format!("{err:#}");
    let code = match write_error(out_dir, name, path, &message) {
        Ok(()) => code,
        Err(_) => EXIT_IO,
    };
    Status { code, out_dir: out_dir.to_path_buf(), message: Some(format!("{name}: {message}")) }
}

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pslab::config::{RunConfig, Setup};
use serde_json::Value;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("repository root")
}

pub fn config_path(name: &str) -> PathBuf {
    repo_root().join("configs").join(format!("{name}.json"))
}

pub fn shipped_configs() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = fs::read_dir(repo_root().join("configs"))
        .expect("configs directory")
        .map(|e| e.expect("directory entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
}

pub fn load(path: &Path) -> (RunConfig, Setup) {
    let config = RunConfig::load(path).expect("shipped config parses");
    let setup = config.setup().expect("shipped config validates");
    (config, setup)
}

pub fn command_of(path: &Path) -> String {
    RunConfig::load(path).expect("config parses").command.expect("shipped configs name their command")
}

pub struct Run {
    pub code: i32,
    pub stderr: String,
    pub dir: PathBuf,
}

pub fn pslab(command: &str, config: &Path, out: &Path, workers: Option<usize>) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pslab"));
    cmd.arg(command).arg("--config").arg(config).arg("--out").arg(out).env_remove("PSLAB_WORKERS");
    if let Some(w) = workers {
        cmd.arg("--workers").arg(w.to_string());
    }
    let output = cmd.output().expect("pslab binary runs");
    Run {
        code: output.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        dir: out.to_path_buf(),
    }
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
        .expect("valid JSON")
}

pub fn summary(dir: &Path) -> Value {
    read_json(&dir.join("manifest.json"))["summary"].clone()
}

/// Rows of a CSV file as string records, header excluded.
pub fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).expect("csv opens");
    let header = reader.headers().expect("csv header").iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.expect("csv record").iter().map(String::from).collect()).collect();
    (header, rows)
}

//! Output directory bookkeeping and the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{Config, ConfigError};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or config values.
    Usage(String),
    /// A verification check did not hold.
    Check(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Check(_) | CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<relu_scl::Error> for CliError {
    fn from(e: relu_scl::Error) -> Self {
        use relu_scl::Error as E;
        match e {
            E::Config(_) | E::InvalidArgument(_) | E::BoundViolated { .. } | E::TooLarge(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub struct Run {
    pub cfg: Config,
    pub out: PathBuf,
    pub dry_run: bool,
    seeds: BTreeMap<String, u64>,
    artifacts: Vec<String>,
}

impl Run {
    pub fn new(cfg: Config, out: PathBuf, dry_run: bool) -> CliResult<Run> {
        std::fs::create_dir_all(&out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run {
            cfg,
            out,
            dry_run,
            seeds: BTreeMap::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn seed(&self) -> CliResult<u64> {
        Ok(self.cfg.get("seed")?)
    }

    pub fn record_seed(&mut self, label: impl Into<String>, seed: u64) {
        self.seeds.insert(label.into(), seed);
    }

    /// Registers an artifact and returns where to write it.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let p = self.artifact(name);
        std::fs::write(p, contents)?;
        Ok(())
    }

    /// `manifest.json`: subcommand, resolved config, versions, seeds and the
    /// SHA-256 of every artifact.
    pub fn write_manifest(&self, subcommand: &str, status: &str) -> CliResult<()> {
        let mut hashes = BTreeMap::new();
        for a in &self.artifacts {
            hashes.insert(a.clone(), file_sha256(&self.out.join(a))?);
        }
        let m = json!({
            "subcommand": subcommand,
            "status": status,
            "dry_run": self.dry_run,
            "config": self.cfg.entries(),
            "versions": {
                "relu-scl": relu_scl::VERSION,
                "relu-scl-cli": env!("CARGO_PKG_VERSION"),
            },
            "seeds": self.seeds,
            "artifacts": hashes,
        });
        std::fs::write(self.out.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A row of a check table.
pub struct CheckRow {
    pub check: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckRow {
    /// Passes when `measured <= bound`.
    pub fn at_most(check: impl Into<String>, measured: f64, bound: f64) -> Self {
        CheckRow {
            check: check.into(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }

    /// Passes when `measured >= bound`.
    pub fn at_least(check: impl Into<String>, measured: f64, bound: f64) -> Self {
        CheckRow {
            check: check.into(),
            measured,
            bound,
            pass: measured >= bound,
        }
    }
}

pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.10e}")
    }
}

/// Writes the table and fails with the first failing row.
pub fn write_checks(run: &mut Run, name: &str, rows: &[CheckRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(run.artifact(name)).map_err(|e| CliError::Failed(e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::Failed(e.to_string());
    w.write_record(["check", "measured", "bound", "pass"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.check.clone(), num(r.measured), num(r.bound), r.pass.to_string()])
            .map_err(csv_err)?;
        println!("{:<28} {:>18} {:>18}  {}", r.check, num(r.measured), num(r.bound), if r.pass { "pass" } else { "FAIL" });
    }
    w.flush()?;
    Ok(())
}

pub fn first_failure(rows: &[CheckRow]) -> CliResult<()> {
    match rows.iter().find(|r| !r.pass) {
        Some(r) => Err(CliError::Check(format!("{}: measured {} against {}", r.check, r.measured, r.bound))),
        None => Ok(()),
    }
}

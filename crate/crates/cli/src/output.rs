//! CSV and sidecar persistence with config-hash stamping.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{Command, ExperimentConfig};
use crate::CliError;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// SHA-256 of the config's canonical JSON form, as lowercase hex. The
/// output location is not part of the experiment and is left out.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut identity = config.clone();
    identity.output_path = None;
    let canonical = serde_json::to_string(&identity).expect("config serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Output of one command. Everything except `wall_time_secs` is a
/// deterministic function of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub command: Command,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: String,
    pub wall_time_secs: f64,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: BTreeMap<String, Value>,
}

impl ExperimentResult {
    /// The primary CSV: a `#` stamp line, the header, the rows, and a `#` summary line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# blockrip {} command={} config_hash={}\n",
            self.version,
            self.command.name(),
            self.config_hash
        );
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let summary: Vec<String> = self.summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.push_str(&format!("# summary {}\n", summary.join(" ")));
        out
    }

    pub fn summary_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: String,
    pub command: Command,
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub csv: String,
    pub summary: BTreeMap<String, Value>,
    pub config: ExperimentConfig,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes the CSV and its `.json` sidecar.
pub fn write_result(result: &ExperimentResult, csv: &Path) -> Result<(), CliError> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(csv, result.to_csv()).map_err(|e| io_err(csv, e))?;
    let sidecar = Sidecar {
        version: result.version.clone(),
        command: result.command,
        config_hash: result.config_hash.clone(),
        wall_time_secs: result.wall_time_secs,
        csv: csv
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        summary: result.summary.clone(),
        config: result.config.clone(),
    };
    let side = sidecar_path(csv);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, text + "\n").map_err(|e| io_err(&side, e))
}

/// Hash recorded in a CSV's stamp line.
pub fn read_stamp(csv: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(csv).map_err(|e| io_err(csv, e))?;
    let first = text.lines().next().unwrap_or_default();
    first
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("config_hash="))
        .map(str::to_string)
        .ok_or_else(|| CliError::Validation(vec![format!("{}: missing config_hash stamp", csv.display())]))
}

/// Re-loads an output and checks that the CSV stamp, the sidecar's hash and
/// the hash of the sidecar's config echo all agree; with `expected` given,
/// also that they match that config.
pub fn verify_output(csv: &Path, expected: Option<&ExperimentConfig>) -> Result<Sidecar, CliError> {
    let stamp = read_stamp(csv)?;
    let side = sidecar_path(csv);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| io_err(&side, e))?;
    let echoed = config_hash(&sidecar.config);
    let mut problems = Vec::new();
    if stamp != sidecar.config_hash {
        problems.push("config_hash: csv stamp differs from sidecar".to_string());
    }
    if echoed != sidecar.config_hash {
        problems.push("config_hash: sidecar config echo does not hash to the recorded value".to_string());
    }
    if let Some(cfg) = expected {
        if config_hash(cfg) != stamp {
            problems.push("config_hash: output was produced by a different config".to_string());
        }
    }
    if problems.is_empty() {
        Ok(sidecar)
    } else {
        Err(CliError::Validation(problems))
    }
}

/// `f64` as written to CSV: shortest round-trip form, exponent for extremes.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

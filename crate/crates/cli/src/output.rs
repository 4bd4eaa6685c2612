//! Output directory handling and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const OUT_ENV: &str = "RYDCHIP_OUT";

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<OutputFile>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the files a command writes and lists them in `<command>.manifest.json`.
pub struct Outputs {
    dir: PathBuf,
    command: String,
    started: f64,
    files: Vec<OutputFile>,
}

impl Outputs {
    /// `--out` wins over the environment variable, which wins over the config.
    pub fn create(cli_out: Option<&Path>, config: &ExperimentConfig, command: &str) -> Result<Self, CliError> {
        let dir = match cli_out {
            Some(p) => p.to_path_buf(),
            None => match std::env::var_os(OUT_ENV) {
                Some(v) if !v.is_empty() => PathBuf::from(v),
                _ => config.run.output_dir.clone(),
            },
        };
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::config("output", format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs { dir, command: command.to_string(), started: now(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::config("output", format!("cannot write {}: {e}", path.display())))?;
        self.files.retain(|f| f.path != name);
        self.files.push(OutputFile { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::config("output", format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(self, config: &ExperimentConfig, arguments: Vec<String>) -> Result<PathBuf, CliError> {
        let canonical = serde_json::to_vec(config).expect("config serializes");
        let manifest = RunManifest {
            tool: "rydchip".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            arguments,
            config_sha256: sha256_hex(&canonical),
            config: config.clone(),
            started_unix: self.started,
            finished_unix: now(),
            outputs: self.files,
        };
        let path = self.dir.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text)
            .map_err(|e| CliError::config("output", format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

//! Reproducibility record written beside the outputs of every run.

use std::path::{Path, PathBuf};

use ovr_core::io::write_json;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub failures: Vec<String>,
}

impl RunRecord {
    pub fn new(command: &str, argv: &[String], seed: Option<u64>) -> Self {
        RunRecord {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: argv.to_vec(),
            seed,
            config: serde_json::Value::Null,
            outputs: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Self {
        self.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
        self
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// `run.json` inside an output directory.
    pub fn write_in(&self, dir: &Path) -> ovr_core::Result<()> {
        write_json(&dir.join("run.json"), self)
    }

    /// `<file>.run.json` next to a single output file.
    pub fn write_beside(&self, file: &Path) -> ovr_core::Result<()> {
        write_json(&beside(file), self)
    }
}

pub fn beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    file.with_file_name(name)
}

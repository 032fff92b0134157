//! Input loading, output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use isocurv_core::io::parse_matrix_csv;
use isocurv_core::{CurvatureSpec, DenseMatrix};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix, CliError> {
    parse_matrix_csv(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_curvature(path: &Path) -> Result<CurvatureSpec, CliError> {
    read_json(path)
}

/// Collects files for one run and writes them plus `manifest.json` into `dir`.
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn text(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents.into_bytes()));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Input(format!("cannot serialize {name}: {e}")))?;
        s.push('\n');
        self.text(name, s);
        Ok(())
    }

    /// Writes every collected file and the manifest describing the run.
    pub fn finish(
        mut self,
        subcommand: &str,
        inputs: Value,
        config: Value,
        seed: u64,
    ) -> Result<(), CliError> {
        let manifest = serde_json::json!({
            "tool": "isocurv",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": subcommand,
            "inputs": inputs,
            "config": config,
            "seed": seed,
            "outputs": self.files.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        });
        self.json("manifest.json", &manifest)?;
        fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", self.dir.display())))?;
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes)
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// `f64` that serializes infinities and NaN as strings instead of `null`.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else if x.is_nan() {
        Value::String("nan".into())
    } else if x > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

pub fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

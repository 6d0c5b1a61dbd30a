//! Output emission: CSV tables, JSON documents, plot-data series and the
//! per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use akb_core::error::{Error, Result};
use serde_json::{json, Value};

/// Collects files written during one command and finishes with a manifest
/// (configuration echo, seed, version, wall time, file list).
pub struct RunReporter {
    out_dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl RunReporter {
    pub fn new(out_dir: &str) -> Result<RunReporter> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(RunReporter {
            out_dir: PathBuf::from(out_dir),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_bytes(&mut self, name: &str, content: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_text(name, &(text + "\n"))
    }

    /// Two-column `t value` series consumable by any plotting tool.
    pub fn write_plotdata(&mut self, name: &str, series: &[(f64, f64)]) -> Result<PathBuf> {
        let mut out = String::new();
        for (t, v) in series {
            out.push_str(&format!("{t:.9e} {v:.9e}\n"));
        }
        self.write_text(name, &out)
    }

    /// Write `manifest.json` and return the list of emitted files.
    pub fn finish(mut self, command: &str, config: Value) -> Result<Vec<String>> {
        let manifest = json!({
            "command": command,
            "config": config,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_seconds": self.started.elapsed().as_secs_f64(),
            "files": self.files,
        });
        let text = serde_json::to_string_pretty(&manifest)?;
        let path = self.path("manifest.json");
        fs::write(&path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))?;
        self.files.push("manifest.json".to_string());
        Ok(self.files)
    }
}

/// Read a file into a JSON value.
pub fn read_json(path: &str) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

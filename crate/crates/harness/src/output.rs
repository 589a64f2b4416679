//! Output directories, run metadata and CSV files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Settings;
use crate::error::{HarnessError, Result};

pub const METADATA_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    settings: &'a Settings,
    seeds: &'a BTreeMap<String, u64>,
    versions: BTreeMap<&'static str, String>,
    /// Rerun with `gradguard <command> --config config.toml`.
    rerun: String,
    outputs: &'a [String],
}

/// An output directory that records what was written to it.
pub struct RunDir {
    dir: PathBuf,
    command: String,
    settings: Settings,
    seeds: BTreeMap<String, u64>,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(command: &str, settings: &Settings) -> Result<RunDir> {
        let dir = settings.out_dir();
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::output(&dir, e))?;
        let mut seeds = BTreeMap::new();
        seeds.insert("seed".to_string(), settings.seed);
        Ok(RunDir {
            dir,
            command: command.into(),
            settings: settings.clone(),
            seeds,
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records a derived seed in the metadata.
    pub fn note_seed(&mut self, name: impl Into<String>, seed: u64) {
        self.seeds.insert(name.into(), seed);
    }

    pub fn record(&mut self, file: &str) -> PathBuf {
        if !self.outputs.iter().any(|f| f == file) {
            self.outputs.push(file.into());
        }
        self.path(file)
    }

    pub fn write_text(&mut self, file: &str, text: &str) -> Result<PathBuf> {
        let path = self.record(file);
        std::fs::write(&path, text).map_err(|e| HarnessError::output(&path, e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::output(file, e))?;
        self.write_text(file, &text)
    }

    pub fn write_csv<R: CsvRow>(&mut self, file: &str, rows: &[R]) -> Result<PathBuf> {
        let path = self.record(file);
        write_csv(&path, rows)?;
        Ok(path)
    }

    /// Writes `run.json` and `config.toml`.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.record(CONFIG_FILE);
        self.record(METADATA_FILE);
        let config = self.settings.to_flat_toml();
        let config_path = self.path(CONFIG_FILE);
        std::fs::write(&config_path, &config).map_err(|e| HarnessError::output(&config_path, e))?;
        let mut versions = BTreeMap::new();
        versions.insert("gradguard", env!("CARGO_PKG_VERSION").to_string());
        versions.insert("checkpoint_format", crate::checkpoint::CHECKPOINT_VERSION.to_string());
        versions.insert("explanation_artifact", gradguard::explain::ARTIFACT_VERSION.to_string());
        let meta = Metadata {
            command: &self.command,
            settings: &self.settings,
            seeds: &self.seeds,
            versions,
            rerun: format!("gradguard {} --config {CONFIG_FILE}", self.command),
            outputs: &self.outputs,
        };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| HarnessError::output(METADATA_FILE, e))?;
        let path = self.path(METADATA_FILE);
        std::fs::write(&path, text).map_err(|e| HarnessError::output(&path, e))?;
        Ok(self.dir)
    }
}

/// A record with a fixed column order.
pub trait CsvRow {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Floats use Rust's shortest round-trip formatting, which does not depend
/// on locale.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_csv<R: CsvRow>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::output(path, e))?;
    w.write_record(R::HEADER).map_err(|e| HarnessError::output(path, e))?;
    for r in rows {
        let f = r.fields();
        debug_assert_eq!(f.len(), R::HEADER.len());
        w.write_record(&f).map_err(|e| HarnessError::output(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::output(path, e))
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

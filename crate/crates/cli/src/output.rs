//! Artifact writing: CSV, JSON and SVG files tracked for the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Floats in CSV files: 17 significant digits, `NaN` for undefined values.
pub fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub library_version: &'static str,
    pub command: &'static str,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub timings: Vec<StageTiming>,
    pub total_seconds: f64,
    pub files: Vec<FileEntry>,
}

/// Output directory that remembers every file written through it.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    timings: Vec<StageTiming>,
    started: Instant,
    /// Subdirectory prepended to relative paths while a scope is active.
    prefix: String,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
            prefix: String::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    fn put(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let rel = format!("{}{rel}", self.prefix);
        let path = self.root.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        let digest = Sha256::digest(bytes);
        self.files.push(FileEntry {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    /// RFC-4180 CSV with a header row.
    pub fn csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
        self.put(rel, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.put(rel, &bytes)
    }

    pub fn text(&mut self, rel: &str, s: &str) -> CliResult<()> {
        self.put(rel, s.as_bytes())
    }

    /// Run `f` with every file written under `sub/`.
    pub fn scoped<T>(&mut self, sub: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let scoped = format!("{}{sub}/", self.prefix);
        let saved = std::mem::replace(&mut self.prefix, scoped);
        let out = f(self);
        self.prefix = saved;
        out
    }

    /// Run `f` and record its wall time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        let out = f(self);
        self.timings.push(StageTiming {
            stage: format!("{}{stage}", self.prefix),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    /// Write `manifest.json` listing every other file with its hash.
    pub fn finish(mut self, config: &ExperimentConfig) -> CliResult<Manifest> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            library_version: fractal_degree::VERSION,
            command: config.command.name(),
            config: config.clone(),
            threads: rayon::current_num_threads(),
            timings: std::mem::take(&mut self.timings),
            total_seconds: self.started.elapsed().as_secs_f64(),
            files: self.files.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f(f64::NAN), "NaN");
        assert_eq!(fmt_f(-2.0), "-2.0000000000000000e0");
    }
}

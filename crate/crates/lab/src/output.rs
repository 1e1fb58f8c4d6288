//! Output directory bookkeeping: JSON/CSV writers, stage timings and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
    pub timings: Vec<Timing>,
    pub files: Vec<FileEntry>,
}

pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    timings: Vec<Timing>,
}

impl Outputs {
    /// Creates the directory and checks that it accepts writes.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| LabError::Invalid(format!("output directory {}: {e}", dir.display())))?;
        let probe = dir.join(".write-check");
        fs::write(&probe, b"").map_err(|e| LabError::Invalid(format!("output directory {} is not writable: {e}", dir.display())))?;
        let _ = fs::remove_file(probe);
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let out = f(self);
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn register(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
        self.register(name);
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::io(self.dir.join(name), e.into_error()))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes `manifest.json` listing every file produced so far.
    pub fn finish(self, command: &str, config_hash: String, seed: u64) -> Result<()> {
        let mut files = Vec::new();
        for name in &self.files {
            let path = self.dir.join(name);
            let bytes = fs::read(&path).map_err(|e| LabError::io(&path, e))?;
            files.push(FileEntry {
                name: name.clone(),
                bytes: bytes.len() as u64,
                sha256: format!("{:x}", Sha256::digest(&bytes)),
            });
        }
        let manifest = RunManifest {
            command: command.into(),
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            timings: self.timings,
            files,
        };
        let path = self.dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 7.514_776e-5, f64::MIN_POSITIVE, 1e300, -2.5] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}

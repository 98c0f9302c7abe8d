//! Artifact writing: every file lands via write-then-rename, the manifest is
//! written last, and a `FAILED` marker is left when a run aborts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use slm_core::table::Table;

pub const MANIFEST: &str = "manifest.json";
pub const FAILED: &str = "FAILED";

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub rng: &'a str,
    pub config: &'a BTreeMap<String, String>,
    pub artifacts: &'a [String],
    pub wall_clock_seconds: f64,
    pub summary: &'a serde_json::Value,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().context("artifact path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

/// Output directory of one run; records the artifacts written so far.
pub struct RunDir {
    pub dir: PathBuf,
    pub artifacts: Vec<String>,
}

impl RunDir {
    /// Creates `dir` and clears any manifest or failure marker from an earlier run.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        for stale in [MANIFEST, FAILED] {
            let p = dir.join(stale);
            if p.exists() {
                fs::remove_file(&p).with_context(|| format!("removing stale {}", p.display()))?;
            }
        }
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.bytes(name, table.to_csv().as_bytes())
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn manifest(&self, manifest: &RunManifest<'_>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST), text.as_bytes())
    }

    /// Leaves a marker naming the error and the partial artifacts.
    pub fn fail(&self, error: &anyhow::Error) -> Result<()> {
        let mut text = format!("error: {error:#}\n");
        if !self.artifacts.is_empty() {
            text.push_str(&format!("partial artifacts: {}\n", self.artifacts.join(", ")));
        }
        write_atomic(&self.dir.join(FAILED), text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stale_markers_are_cleared() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join(FAILED), "old").unwrap();
        let mut run = RunDir::create(tmp.path()).unwrap();
        assert!(!tmp.path().join(FAILED).exists());
        let mut t = Table::new(&["a"]);
        t.push_f64(&[0.5]);
        run.csv("t.csv", &t).unwrap();
        assert_eq!(fs::read_to_string(tmp.path().join("t.csv")).unwrap(), "a\n0.5\n");
        assert!(!tmp.path().join(".t.csv.tmp").exists());
        run.fail(&anyhow::anyhow!("boom")).unwrap();
        let marker = fs::read_to_string(tmp.path().join(FAILED)).unwrap();
        assert!(marker.contains("boom") && marker.contains("t.csv"));
    }
}

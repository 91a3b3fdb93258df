//! Run manifest and all-or-nothing output staging.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::export::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

/// Outputs and summary numbers of one workflow stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of the configuration the stage ran with, if it used one.
    pub config_hash: Option<String>,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub metrics: BTreeMap<String, serde_json::Value>,
}

/// Contents are deterministic for a fixed configuration; wall-clock times
/// live in a separate timings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION").to_string(), stages: BTreeMap::new() }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_json<T: for<'de> Deserialize<'de> + Default>(path: &Path) -> Result<T> {
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| Error::Malformed(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(e.into()),
    }
}

impl RunManifest {
    pub fn load(out: &Path) -> Result<Self> {
        let mut m: Self = read_json(&out.join(MANIFEST_FILE))?;
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        Ok(m)
    }

    /// Every listed output must exist.
    pub fn check_outputs(&self, out: &Path) -> Result<()> {
        for (stage, rec) in &self.stages {
            for f in &rec.outputs {
                if !out.join(f).is_file() {
                    return Err(Error::input(format!("stage {stage}: missing output {f}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Files for one stage are written into a hidden directory and moved into
/// place only when the stage succeeds.
pub struct Staging {
    out: PathBuf,
    tmp: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path, stage: &str) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        let tmp = out.join(format!(".staging-{stage}-{}", std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp)?;
        }
        std::fs::create_dir(&tmp)?;
        Ok(Self { out: out.to_path_buf(), tmp, files: Vec::new() })
    }

    /// Path to write `name` to; it is moved to the output directory on commit.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.tmp.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.file(name);
        std::fs::write(p, contents)?;
        Ok(())
    }

    /// Move staged files into place and record the stage in the manifest.
    pub fn commit(
        mut self,
        stage: &str,
        config_hash: Option<String>,
        metrics: BTreeMap<String, serde_json::Value>,
        seconds: f64,
    ) -> Result<RunManifest> {
        let mut manifest = RunManifest::load(&self.out)?;
        for f in &self.files {
            std::fs::rename(self.tmp.join(f), self.out.join(f))?;
        }
        let mut outputs = std::mem::take(&mut self.files);
        outputs.sort();
        manifest.stages.insert(stage.to_string(), StageRecord { config_hash, outputs, metrics });
        manifest.check_outputs(&self.out)?;
        write_atomic(&self.out.join(MANIFEST_FILE), manifest.to_json().as_bytes())?;
        let mut timings: BTreeMap<String, f64> = read_json(&self.out.join(TIMINGS_FILE))?;
        timings.insert(stage.to_string(), seconds);
        let text = serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n";
        write_atomic(&self.out.join(TIMINGS_FILE), text.as_bytes())?;
        Ok(manifest)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.tmp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_stage_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Staging::new(dir.path(), "train").unwrap();
            s.write("model.json", "{}").unwrap();
        }
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_moves_files_and_records_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Staging::new(dir.path(), "train").unwrap();
        s.write("b.txt", "b").unwrap();
        s.write("a.txt", "a").unwrap();
        let mut metrics = BTreeMap::new();
        metrics.insert("accuracy".to_string(), serde_json::json!(1.0));
        let m = s.commit("train", Some("abc".into()), metrics, 0.5).unwrap();
        assert_eq!(m.stages["train"].outputs, vec!["a.txt", "b.txt"]);
        let back = RunManifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(dir.path().join(TIMINGS_FILE).is_file());
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 4);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

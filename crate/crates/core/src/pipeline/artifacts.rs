//! Artifact housekeeping: atomic writes, the per-directory stage lock, and
//! provenance records.
//!
//! Every stage output is written to a temp file and renamed into place, so a
//! failing stage never leaves a corrupt artifact. One lock file per output
//! directory keeps concurrent stage runs out of each other's way.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Write-then-rename; the temp file lives next to the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad artifact path {path:?}")))?;
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Exclusive per-output-directory lock; removed on drop.
pub struct StageLock {
    path: PathBuf,
}

impl StageLock {
    pub fn acquire(out_dir: &Path) -> Result<StageLock> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StageLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked { path })
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for StageLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// What produced an artifact set: the config hash, every seed, and input
/// checksums. Enough to re-run the stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Provenance {
    pub fn new(stage: &str, config_json: &str, seeds: BTreeMap<String, u64>) -> Provenance {
        Provenance {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            seeds,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let dir = out_dir.join("provenance");
        let path = dir.join(format!("{}.json", self.stage));
        let json = serde_json::to_string_pretty(self)?;
        atomic_write(&path, json.as_bytes())
    }
}

/// Errors with the producing subcommand's name when an upstream artifact is
/// missing.
pub fn require_artifact(path: &Path, producer: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            producer: producer.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("biaslens-art-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = temp_dir("aw");
        let path = dir.join("x.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        let leftovers: Vec<_> = fs::read_dir(&dir)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn lock_excludes_second_holder() {
        let dir = temp_dir("lock");
        let lock = StageLock::acquire(&dir).unwrap();
        assert!(matches!(
            StageLock::acquire(&dir),
            Err(Error::Locked { .. })
        ));
        drop(lock);
        let lock2 = StageLock::acquire(&dir).unwrap();
        drop(lock2);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn missing_artifact_names_producer() {
        let err = require_artifact(Path::new("/nonexistent/thing.json"), "match").unwrap_err();
        assert!(err.to_string().contains("match"));
    }

    #[test]
    fn sha256_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

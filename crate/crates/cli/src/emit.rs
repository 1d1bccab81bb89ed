//! Output directory bookkeeping and the run manifest.

use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: String,
    pub started: String,
    pub finished: String,
    /// Every artifact except the manifest itself.
    pub files: Vec<FileEntry>,
}

pub struct Emitter {
    dir: PathBuf,
    files: Vec<FileEntry>,
    started: SystemTime,
}

impl Emitter {
    /// Prepares `dir`, removing stale copies of the artifacts named in `known`.
    pub fn new(dir: &Path, known: &[&str]) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for name in known.iter().chain([&MANIFEST]) {
            let p = dir.join(name);
            if p.is_file() {
                std::fs::remove_file(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            }
        }
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), started: SystemTime::now() })
    }

    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: format!("{:x}", Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn finish(self, command: &str, config: String) -> Result<RunManifest, CliError> {
        let m = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            started: humantime::format_rfc3339_seconds(self.started).to_string(),
            finished: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
            files: self.files,
        };
        let json = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(e.to_string()))?;
        let p = self.dir.join(MANIFEST);
        std::fs::write(&p, json + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "stale").unwrap();
        let mut e = Emitter::new(dir.path(), &["a.csv"]).unwrap();
        assert!(!dir.path().join("a.csv").exists());
        e.emit("a.csv", b"abc").unwrap();
        let m = e.finish("run", "x = 1\n".into()).unwrap();
        assert_eq!(
            m.files[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let text = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}

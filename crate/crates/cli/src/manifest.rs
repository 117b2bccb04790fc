//! Artifact bookkeeping with content hashes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Collects the files a command writes.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

#[derive(Serialize)]
struct ManifestDoc<'a> {
    command: &'a str,
    experiment: &'a str,
    seed: u64,
    config_sha256: String,
    overrides: &'a [String],
    artifacts: &'a [Artifact],
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Other(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `bytes` to `name` inside the output directory.
    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Other(format!("cannot create {}: {e}", parent.display())))?;
        }
        std::fs::write(&path, bytes.as_ref())
            .map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))?;
        self.record(name)?;
        Ok(path)
    }

    /// Registers a file that was written by other means.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let path = self.path(name);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Other(format!("cannot read back {}: {e}", path.display())))?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        Ok(())
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    /// Writes `<command>.manifest.toml` and returns its path.
    pub fn finish(
        self,
        command: &str,
        experiment: &str,
        seed: u64,
        config_text: &str,
        overrides: &[String],
    ) -> Result<(PathBuf, Vec<Artifact>), CliError> {
        let doc = ManifestDoc {
            command,
            experiment,
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            overrides,
            artifacts: &self.artifacts,
        };
        let text = toml::to_string(&doc).map_err(|e| CliError::Other(e.to_string()))?;
        let path = self.dir.join(format!("{command}.manifest.toml"));
        std::fs::write(&path, text).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))?;
        Ok((path, self.artifacts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_artifacts_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new(dir.path()).unwrap();
        out.write("a.csv", "x\n1\n").unwrap();
        out.write("sub/b.txt", "hello").unwrap();
        out.write("a.csv", "x\n2\n").unwrap();
        let (path, arts) = out.finish("eval", "demo", 3, "seed = 3", &["seed=3".into()]).unwrap();
        assert_eq!(arts.len(), 2);
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.contains("sub/b.txt"));
        assert!(text.contains("seed=3"));
        assert!(text.contains(&sha256_hex(b"x\n2\n")));
    }
}

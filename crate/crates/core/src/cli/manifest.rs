//! Run manifests: what ran, with which resolved configuration, on which
//! inputs, producing which files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Command line after the program name.
    pub args: Vec<String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input paths as given on the command line.
    pub inputs: Vec<FileHash>,
    /// Output paths relative to the run directory.
    pub outputs: Vec<FileHash>,
    pub wall_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn hash_input(path: &Path) -> Result<FileHash, CliError> {
    Ok(FileHash { path: path.display().to_string(), sha256: sha256_file(path)? })
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("run directory {} has no readable manifest: {e}", dir.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Re-hash every output, and every input that still exists. Missing or
    /// altered outputs are integrity errors.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        for f in &self.outputs {
            let path = dir.join(&f.path);
            if !path.exists() {
                return Err(CliError::Integrity(format!("{} is listed in the manifest but missing", path.display())));
            }
            let got = sha256_file(&path)?;
            if got != f.sha256 {
                return Err(CliError::Integrity(format!(
                    "{} has sha256 {got}, manifest records {}",
                    path.display(),
                    f.sha256
                )));
            }
        }
        for f in &self.inputs {
            let path = Path::new(&f.path);
            if !path.exists() {
                log::warn!("input {} of {} no longer exists; not verified", f.path, dir.display());
                continue;
            }
            if sha256_file(path)? != f.sha256 {
                return Err(CliError::Integrity(format!("input {} changed since the run", f.path)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        fs::write(&p, "abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn round_trip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("out.csv"), "a,b\n").unwrap();
        let m = RunManifest {
            command: "gen".into(),
            tool_version: "0".into(),
            args: vec![],
            config: serde_json::json!({"k": 1}),
            seeds: vec![1],
            inputs: vec![],
            outputs: vec![FileHash {
                path: "out.csv".into(),
                sha256: sha256_file(&dir.path().join("out.csv")).unwrap(),
            }],
            wall_seconds: 0.0,
        };
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        back.verify(dir.path()).unwrap();
        fs::write(dir.path().join("out.csv"), "a,c\n").unwrap();
        assert!(matches!(back.verify(dir.path()), Err(CliError::Integrity(_))));
        assert!(matches!(RunManifest::read(&dir.path().join("nope")), Err(CliError::Config(_))));
    }
}

//! Per-stage manifests: hashes of every input and output plus the settings
//! that produced them.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{Failure, Outcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Bare file name for artifacts in the output directory, the configured
    /// path otherwise.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    io::copy(&mut f, &mut h)?;
    Ok(format!("{:x}", h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn manifest_path(out: &Path, stage: &str) -> PathBuf {
    out.join(format!("{stage}.manifest.json"))
}

/// Display name for `path`: relative to `out` when inside it.
pub fn display_name(out: &Path, path: &Path) -> String {
    match path.strip_prefix(out) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => path.to_string_lossy().into_owned(),
    }
}

pub fn hash_files(out: &Path, paths: &[PathBuf]) -> Outcome<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            let sha256 = sha256_file(p).map_err(|e| Failure::input(format!("cannot hash {}: {e}", p.display())))?;
            Ok(FileHash {
                path: display_name(out, p),
                sha256,
            })
        })
        .collect()
}

impl Manifest {
    pub fn read(path: &Path) -> Outcome<Manifest> {
        let text =
            fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("malformed manifest {}: {e}", path.display())))
    }

    pub fn write(&self, out: &Path) -> Outcome {
        let path = manifest_path(out, &self.stage);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
    }

    /// True when the recorded inputs and config match and every output is
    /// still present with its recorded hash.
    pub fn is_current(&self, out: &Path, inputs: &[FileHash], config: &serde_json::Value) -> bool {
        self.tool_version == env!("CARGO_PKG_VERSION")
            && self.inputs == inputs
            && &self.config == config
            && self.outputs.iter().all(|o| {
                sha256_file(&out.join(&o.path))
                    .map(|h| h == o.sha256)
                    .unwrap_or(false)
            })
    }
}

/// Checks that each manifest's inputs carry the hashes its producers
/// recorded, and that every recorded output is unchanged on disk.
pub fn verify_chain(out: &Path, stages: &[&str]) -> Outcome<Vec<Manifest>> {
    let mut produced: BTreeMap<String, (String, String)> = BTreeMap::new();
    let mut problems = Vec::new();
    let mut manifests = Vec::new();
    for &stage in stages {
        let path = manifest_path(out, stage);
        if !path.exists() {
            problems.push(format!("{} is missing; run `skillcast {stage}`", path.display()));
            continue;
        }
        let m = Manifest::read(&path)?;
        for input in &m.inputs {
            if let Some((producer, sha)) = produced.get(&input.path) {
                if sha != &input.sha256 {
                    problems.push(format!(
                        "{stage} consumed {} with hash {} but {producer} produced {}",
                        input.path, input.sha256, sha
                    ));
                }
            }
        }
        for output in &m.outputs {
            match sha256_file(&out.join(&output.path)) {
                Ok(h) if h == output.sha256 => {}
                Ok(_) => problems.push(format!("{} changed since {stage} wrote it", output.path)),
                Err(_) => problems.push(format!("{} is missing; run `skillcast {stage}`", output.path)),
            }
            produced.insert(output.path.clone(), (stage.to_string(), output.sha256.clone()));
        }
        manifests.push(m);
    }
    if problems.is_empty() {
        Ok(manifests)
    } else {
        Err(Failure::input(format!("manifest chain is broken:\n  - {}", problems.join("\n  - "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(out: &Path, stage: &str, inputs: &[&str], outputs: &[&str]) -> Manifest {
        let hash = |names: &[&str]| hash_files(out, &names.iter().map(|n| out.join(n)).collect::<Vec<_>>()).unwrap();
        Manifest {
            stage: stage.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::json!({}),
            inputs: hash(inputs),
            outputs: hash(outputs),
        }
    }

    #[test]
    fn sha_matches_known_vector() {
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn chain_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        fs::write(out.join("a.csv"), "1\n").unwrap();
        manifest(out, "first", &[], &["a.csv"]).write(out).unwrap();
        fs::write(out.join("b.csv"), "2\n").unwrap();
        manifest(out, "second", &["a.csv"], &["b.csv"]).write(out).unwrap();
        assert_eq!(verify_chain(out, &["first", "second"]).unwrap().len(), 2);

        fs::write(out.join("a.csv"), "changed\n").unwrap();
        let err = verify_chain(out, &["first", "second"]).unwrap_err().to_string();
        assert!(err.contains("a.csv changed"), "{err}");
    }

    #[test]
    fn chain_detects_stale_consumer() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        fs::write(out.join("a.csv"), "1\n").unwrap();
        fs::write(out.join("b.csv"), "2\n").unwrap();
        manifest(out, "second", &["a.csv"], &["b.csv"]).write(out).unwrap();
        fs::write(out.join("a.csv"), "newer\n").unwrap();
        manifest(out, "first", &[], &["a.csv"]).write(out).unwrap();
        let err = verify_chain(out, &["first", "second"]).unwrap_err().to_string();
        assert!(err.contains("second consumed a.csv"), "{err}");
    }

    #[test]
    fn currency_check() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        fs::write(out.join("in.csv"), "x").unwrap();
        fs::write(out.join("o.csv"), "y").unwrap();
        let m = manifest(out, "s", &["in.csv"], &["o.csv"]);
        let inputs = m.inputs.clone();
        assert!(m.is_current(out, &inputs, &serde_json::json!({})));
        assert!(!m.is_current(out, &inputs, &serde_json::json!({"k": 1})));
        fs::write(out.join("o.csv"), "z").unwrap();
        assert!(!m.is_current(out, &inputs, &serde_json::json!({})));
    }
}

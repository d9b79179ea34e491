//! Run manifests: what was asked for, with which inputs, producing what.
//! No timestamps or host details, so identical runs give identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: C,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[&Path]) -> Result<Vec<FileDigest>, Failure> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// `out.nt` -> `out.nt.manifest.json`; a directory gets `manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}

pub fn write<C: Serialize>(
    command: &'static str,
    seed: Option<u64>,
    config: C,
    inputs: &[&Path],
    outputs: &[&Path],
    at: &Path,
) -> Result<PathBuf, Failure> {
    let manifest = Manifest {
        tool: "loke",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    let path = manifest_path(at);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

//! Experiment manifests: what was run, on which inputs, producing what.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: &str = "mmm-manifest/v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    /// The seed actually used, after the `MMM_SEED` fallback.
    pub seed: u64,
    /// Working directory that relative paths in `args` resolve against.
    pub cwd: PathBuf,
    pub inputs: Vec<FileDigest>,
    /// `-` stands for standard output.
    pub outputs: Vec<FileDigest>,
    pub version: String,
    pub timestamp: u64,
}

impl Manifest {
    pub fn new(
        command: &str,
        args: Vec<String>,
        seed: u64,
        inputs: Vec<FileDigest>,
        outputs: Vec<FileDigest>,
    ) -> Manifest {
        Manifest {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            args,
            seed,
            cwd: std::env::current_dir().unwrap_or_default(),
            inputs,
            outputs,
            version: mmm::VERSION.into(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Default manifest location next to an output file.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

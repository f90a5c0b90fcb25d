//! Run manifests: what produced an output and how to check it.
//!
//! Every output carries a reference to `manifest.json` (a `#` header line in
//! CSV/text files, a `"manifest"` object in JSON files) holding the config
//! hash, seed and version. The manifest itself lists a SHA-256 for every
//! output plus wall-clock timings; the timings are the only non-reproducible
//! bytes of a run.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::CommandOutput;
use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Identity of a run, embedded in every output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub manifest: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Stamp {
    /// Stamp for a configuration (hash of its canonical serialization).
    pub fn new(cfg: &RunConfig) -> Self {
        Stamp {
            manifest: MANIFEST_FILE.to_string(),
            config_sha256: sha256_hex(cfg.serialize().as_bytes()),
            seed: cfg.seed(),
            version: VERSION.to_string(),
        }
    }

    /// `# manifest=… config_sha256=… seed=… version=…` header line.
    pub fn comment_line(&self) -> String {
        format!(
            "# manifest={} config_sha256={} seed={} version={}\n",
            self.manifest, self.config_sha256, self.seed, self.version
        )
    }

    /// Pretty JSON of `payload` with a `"manifest"` member added.
    pub fn wrap_json(&self, payload: serde_json::Value) -> String {
        let mut obj = match payload {
            serde_json::Value::Object(m) => m,
            other => {
                let mut m = serde_json::Map::new();
                m.insert("data".into(), other);
                m
            }
        };
        obj.insert("manifest".into(), serde_json::to_value(self).expect("stamp serializes"));
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("JSON serializes");
        s.push('\n');
        s
    }
}

/// Record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    /// Input file → SHA-256 (files read besides the config).
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the run directory) → SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    /// Exit code the run finished with.
    pub exit_code: i32,
}

impl RunManifest {
    pub fn new(command: &str, stamp: &Stamp, out: &CommandOutput, elapsed: Duration, exit_code: i32) -> Self {
        RunManifest {
            command: command.to_string(),
            config_sha256: stamp.config_sha256.clone(),
            seed: stamp.seed,
            version: stamp.version.clone(),
            inputs: out.inputs.clone(),
            outputs: out.files.iter().map(|f| (f.path.clone(), sha256_hex(f.contents.as_bytes()))).collect(),
            timings: BTreeMap::from([("total_seconds".to_string(), elapsed.as_secs_f64())]),
            exit_code,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Check the listed checksums against the files under `dir`.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        for (path, sum) in &self.outputs {
            let bytes = std::fs::read(dir.join(path))?;
            if sha256_hex(&bytes) != *sum {
                return Err(CliError::Input(format!("checksum mismatch for {path}")));
            }
        }
        Ok(())
    }
}

/// Write every output and the manifest under `dir`. Writes are sequential, in output order.
pub fn write_run(dir: &Path, manifest: &RunManifest, out: &CommandOutput) -> Result<(), CliError> {
    for f in &out.files {
        let path = dir.join(&f.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, &f.contents)?;
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(MANIFEST_FILE), manifest.to_json())?;
    Ok(())
}

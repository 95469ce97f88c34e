//! Run manifests: everything needed to reproduce a run, plus digests of the
//! files it wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ams_core::{AmsError, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_SUFFIX: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Value,
    pub results: Value,
    /// Output suffix to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, args: Value) -> Self {
        Manifest {
            tool: "ams".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            results: Value::Null,
            outputs: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path, command: &str) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| AmsError::Config(format!("manifest {}: {e}", path.display())))?;
        if m.command != command {
            return Err(AmsError::Config(format!(
                "manifest {} records a `{}` run, not `{command}`",
                path.display(),
                m.command
            )));
        }
        Ok(m)
    }

    pub fn args<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.args.clone())
            .map_err(|e| AmsError::Config(format!("manifest arguments: {e}")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serialisable value")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<prefix>_<suffix>`.
pub fn output_path(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push("_");
    name.push(suffix);
    prefix.with_file_name(name)
}

/// Writes named outputs next to `prefix` and records their digests.
pub struct OutputSet<'a> {
    prefix: &'a Path,
    pub manifest: Manifest,
}

impl<'a> OutputSet<'a> {
    pub fn new(prefix: &'a Path, manifest: Manifest) -> Self {
        OutputSet { prefix, manifest }
    }

    pub fn write(&mut self, suffix: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = output_path(self.prefix, suffix);
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.manifest
            .outputs
            .insert(suffix.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = output_path(self.prefix, MANIFEST_SUFFIX);
        fs::write(&path, self.manifest.to_json())?;
        Ok(path)
    }
}

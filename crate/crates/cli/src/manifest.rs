use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Everything needed to repeat a run: the subcommand, every flag after
/// defaults are applied, the tool version and a digest of each input file.
///
/// The worker count is deliberately absent since outputs do not depend on it.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub flags: BTreeMap<String, Value>,
    pub tool_version: String,
    pub input_digests: BTreeMap<String, String>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            flags: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_digests: BTreeMap::new(),
            seed: None,
            notes: BTreeMap::new(),
        }
    }

    pub fn flag(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).expect("flag values serialize");
        self.flags.insert(name.to_string(), v);
        self
    }

    pub fn note(&mut self, name: &str, value: Value) -> &mut Self {
        self.notes.insert(name.to_string(), value);
        self
    }

    /// Records the digest of an input file and returns its bytes.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.input_digests
            .insert(path.display().to_string(), content_digest(&bytes));
        Ok(bytes)
    }

    /// Writes the manifest beside `primary` or, without a primary output
    /// file, to stderr.
    pub fn emit(&self, primary: Option<&Path>) -> Result<()> {
        match primary {
            Some(p) => {
                let mut text = serde_json::to_string_pretty(self)?;
                text.push('\n');
                let path = manifest_path(p);
                fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
            }
            None => {
                let line = format!("manifest: {}\n", serde_json::to_string(self)?);
                io::stderr().write_all(line.as_bytes())?;
                Ok(())
            }
        }
    }
}

/// `out.csv` gets its manifest at `out.csv.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// First 64 bits of SHA-256, as 16 lowercase hex digits.
pub fn content_digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    hash[..8].iter().map(|b| format!("{b:02x}")).collect()
}

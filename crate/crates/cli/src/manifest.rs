//! Run manifests: a JSON record of the resolved configuration, seed, and
//! input digests written next to every subcommand's outputs, so a run can be
//! replayed and its inputs verified.

use std::fs;
use std::path::{Path, PathBuf};

use actseg::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(64);
    for b in Sha256::digest(bytes) {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

impl RunManifest {
    pub fn new<C: Serialize>(subcommand: &'static str, seed: Option<u64>, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)
            .map_err(|e| Error::Validation(format!("cannot serialize config: {e}")))?;
        Ok(RunManifest {
            tool: "actseg",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            config,
            inputs: Vec::new(),
        })
    }

    pub fn add_file(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }

    /// Digests every regular file directly under `dir`, sorted by name.
    pub fn add_dir(&mut self, dir: &Path) -> Result<()> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for f in files {
            self.add_file(&f)?;
        }
        Ok(())
    }

    fn render(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    /// Writes `<out>.manifest.json` next to a file output.
    pub fn write_beside(&self, out: &Path) -> Result<()> {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = out.with_file_name(name);
        fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))
    }

    /// Writes `manifest.json` inside a directory output.
    pub fn write_inside(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))
    }
}

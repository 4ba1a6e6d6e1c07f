//! Atomic file output with a reproducibility header.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "quintic";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance recorded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub params_sha256: String,
}

impl Meta {
    pub fn new<T: Serialize>(command: &'static str, seed: Option<u64>, inputs: &T) -> Result<Self> {
        let bytes = serde_json::to_vec(inputs)?;
        Ok(Self {
            tool: TOOL,
            version: VERSION,
            command,
            seed,
            params_sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }

    pub fn csv_comment(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# {} {} {} seed={} params_sha256={}\n",
            self.tool, self.version, self.command, seed, self.params_sha256
        )
    }
}

/// A CSV table rendered in memory, written only once everything succeeded.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(meta: &Meta, header: &[&str]) -> Self {
        let mut text = meta.csv_comment();
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn num(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v}").unwrap();
    s
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Pending outputs; nothing touches the file system until [`Outputs::commit`].
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
    stdout: Vec<u8>,
}

impl Outputs {
    /// Write to `path`, or to stdout when no path is given.
    pub fn add(&mut self, path: Option<&Path>, contents: String) {
        match path {
            Some(p) => self.files.push((p.to_path_buf(), contents.into_bytes())),
            None => self.stdout.extend_from_slice(contents.as_bytes()),
        }
    }

    pub fn add_json<T: Serialize>(&mut self, path: Option<&Path>, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(path, s);
        Ok(())
    }

    /// Write every file through a temporary in the target directory followed
    /// by a rename, so a failed run leaves no partial output.
    pub fn commit(self) -> Result<()> {
        for (path, bytes) in &self.files {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("writing {}", path.display()))?;
            tmp.write_all(bytes)?;
            tmp.flush()?;
            tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
        }
        if !self.stdout.is_empty() {
            std::io::stdout().write_all(&self.stdout)?;
        }
        Ok(())
    }
}

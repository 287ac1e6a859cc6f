//! Run manifests: what produced an output, from which inputs.
//!
//! No timestamps are recorded, so re-running a stage on the same inputs
//! reproduces the manifest byte for byte.

use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::Context;
use serde::Serialize;
use untangle_core::digest::sha256_hex;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &'static str, config: impl Serialize) -> anyhow::Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Record an input file, or a git repository by its HEAD commit.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        let sha256 = if path.is_dir() { format!("git:{}", git_head(path)?) } else { file_digest(path)? };
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> anyhow::Result<()> {
        self.outputs.push(FileDigest { path: path.display().to_string(), sha256: file_digest(path)? });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }

    /// `<out>.manifest.json` next to a single output file.
    pub fn write_beside(&self, output: &Path) -> anyhow::Result<()> {
        self.write(&beside(output))
    }
}

pub fn beside(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(bytes))
}

fn git_head(repo: &Path) -> anyhow::Result<String> {
    let out = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["rev-parse", "HEAD"])
        .output()
        .context("running git rev-parse")?;
    if !out.status.success() {
        anyhow::bail!("git rev-parse HEAD failed in {}", repo.display());
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

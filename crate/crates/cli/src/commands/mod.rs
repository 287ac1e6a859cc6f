mod analysis;
mod classify;
mod data;
mod learn;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use untangle_core::goldset::{read_labeled_jsonl, LabeledChange};
use untangle_core::mining::{read_changes_jsonl, MethodChange};
use untangle_core::Exec;

use crate::args::{Cli, Command};
use crate::config::FileConfig;
use crate::invalid;

pub(crate) struct Ctx {
    pub file: FileConfig,
    pub exec: Exec,
}

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx {
        file: FileConfig::load(cli.config.as_deref())?,
        exec: if cli.sequential { Exec::Sequential } else { Exec::Parallel },
    };
    match cli.command {
        Command::Mine(a) => data::mine(&ctx, a),
        Command::Goldset(a) => data::goldset(&ctx, a),
        Command::Serve(a) => crate::server::serve(a),
        Command::ClassifyLlm(a) => classify::classify_llm(&ctx, a),
        Command::Embed(a) => learn::embed(&ctx, a),
        Command::Train(a) => learn::train(&ctx, a),
        Command::Eval(a) => learn::eval(&ctx, a),
        Command::Denoise(a) => analysis::denoise(&ctx, a),
        Command::Metrics(a) => analysis::metrics(&ctx, a),
        Command::Stats(a) => analysis::stats(a),
        Command::Report(a) => analysis::report(a),
    }
}

pub(crate) fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("input file {} not found", path.display())))
    }
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    require_file(path)?;
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub(crate) fn load_changes(path: &Path) -> anyhow::Result<Vec<MethodChange>> {
    read_changes_jsonl(open(path)?).with_context(|| format!("reading changes from {}", path.display()))
}

pub(crate) fn load_labeled(path: &Path) -> anyhow::Result<Vec<LabeledChange>> {
    read_labeled_jsonl(open(path)?).with_context(|| format!("reading labeled changes from {}", path.display()))
}

pub(crate) fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

pub(crate) fn to_pretty_json(value: &impl Serialize) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    write_bytes(path, to_pretty_json(value)?.as_bytes())
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_bytes(path, &buf)
}

/// `PROJECT=FILE`; a bare file takes its stem as project name.
pub(crate) fn project_path(arg: &str) -> anyhow::Result<(String, PathBuf)> {
    let (project, path) = match arg.split_once('=') {
        Some((p, f)) => (p.trim().to_string(), PathBuf::from(f)),
        None => {
            let path = PathBuf::from(arg);
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            (stem, path)
        }
    };
    if project.is_empty() || project.contains(':') {
        return Err(invalid(format!("bad project name in {arg:?}")));
    }
    Ok((project, path))
}

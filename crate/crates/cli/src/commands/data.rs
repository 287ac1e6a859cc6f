//! `mine` and `goldset`.

use anyhow::Context;
use serde::Serialize;
use untangle_core::goldset::{
    build_automated_goldset, export_dataset, merge_labels, AnnotationStore, ExportFormat, GoldsetConfig, KappaResult,
};
use untangle_core::mining::{mine_repository, write_changes_jsonl, BugfixRules, Language, ParserConfig};
use untangle_core::Label;

use super::{ensure_parent, load_changes, to_pretty_json, write_bytes, Ctx};
use crate::args::{FormatArg, GoldsetArgs, MineArgs};
use crate::invalid;
use crate::manifest::Manifest;

#[derive(Serialize)]
struct MineConfig<'a> {
    args: &'a MineArgs,
    bugfix_patterns: &'a [String],
    extensions: &'a [String],
}

pub fn mine(ctx: &Ctx, args: MineArgs) -> anyhow::Result<()> {
    if !args.repo.is_dir() {
        return Err(invalid(format!("repository {} not found", args.repo.display())));
    }
    let patterns =
        if args.bugfix_patterns.is_empty() { &ctx.file.mining.bugfix_patterns } else { &args.bugfix_patterns };
    let extensions = if args.extensions.is_empty() { &ctx.file.mining.extensions } else { &args.extensions };
    let rules = BugfixRules::from_patterns(patterns)?;
    let parser = ParserConfig {
        language: Language::Java,
        extensions: extensions.iter().map(|e| e.trim_start_matches('.').to_string()).collect(),
    };

    let result = mine_repository(&args.repo, &rules, &parser, ctx.exec)
        .with_context(|| format!("mining {}", args.repo.display()))?;
    for s in &result.skipped {
        tracing::warn!(?s, "skipped file");
    }

    let mut buf = Vec::new();
    write_changes_jsonl(&mut buf, &result.changes)?;
    write_bytes(&args.out, &buf)?;

    let mut manifest = Manifest::new("mine", MineConfig { args: &args, bugfix_patterns: patterns, extensions })?;
    manifest.input(&args.repo)?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;

    let fixes = result.commits.iter().filter(|c| c.is_bugfix).count();
    eprintln!(
        "mined {} method changes from {} commits ({} bug fixes, {} files skipped)",
        result.changes.len(),
        result.commits.len(),
        fixes,
        result.skipped.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct GoldsetSummary {
    records: usize,
    buggy: usize,
    notbuggy: usize,
    human_labels: usize,
    sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<KappaResult>,
}

#[derive(Serialize)]
struct GoldsetRunConfig<'a> {
    args: &'a GoldsetArgs,
    goldset: &'a GoldsetConfig,
}

pub fn goldset(ctx: &Ctx, args: GoldsetArgs) -> anyhow::Result<()> {
    let mut cfg = ctx.file.goldset.clone();
    if let Some(v) = args.cap {
        cfg.notbuggy_cap = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.min_age_days {
        cfg.min_age_days = v;
    }
    if args.reference_time.is_some() {
        cfg.reference_time = args.reference_time;
    }
    let raters = args
        .kappa
        .as_deref()
        .map(|s| match s.split_once(',') {
            Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                Ok((a.trim().to_string(), b.trim().to_string()))
            }
            _ => Err(invalid(format!("--kappa expects A,B, got {s:?}"))),
        })
        .transpose()?;

    let changes = load_changes(&args.changes)?;
    let auto = build_automated_goldset(&changes, &cfg)?;

    let mut manifest = Manifest::new("goldset", GoldsetRunConfig { args: &args, goldset: &cfg })?;
    manifest.input(&args.changes)?;

    let (records, human_labels, kappa) = match &args.annotations {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(invalid(format!("annotation store {} not found", dir.display())));
            }
            let store = AnnotationStore::open(dir, changes.clone())?;
            let log = dir.join("labels.jsonl");
            if log.is_file() {
                manifest.input(&log)?;
            }
            let human = store.resolved_labels();
            let kappa = raters.map(|(a, b)| store.kappa(&a, &b)).transpose()?;
            let n = human.len();
            (merge_labels(auto, human), n, kappa)
        }
        None => (auto, 0, None),
    };

    let format = match args.format {
        FormatArg::Jsonl => ExportFormat::Jsonl,
        FormatArg::Csv => ExportFormat::Csv,
    };
    ensure_parent(&args.out)?;
    let sha256 = export_dataset(&records, &args.out, format)?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;

    let buggy = records.iter().filter(|r| r.label == Label::Buggy).count();
    let summary =
        GoldsetSummary { records: records.len(), buggy, notbuggy: records.len() - buggy, human_labels, sha256, kappa };
    print!("{}", to_pretty_json(&summary)?);
    Ok(())
}

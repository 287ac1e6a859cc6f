//! `embed`, `train` and `eval`.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use untangle_core::classifier::{
    evaluate_loo, evaluate_model, split_dataset, train as fit, EvalReport, ModelArtifact, Sample, TrainConfig,
};
use untangle_core::embedding::{
    read_embeddings_jsonl, write_embeddings_jsonl, EmbedConfig, EmbedProvider, Embedder, EmbeddingCache,
    EmbeddingRecord, RemoteApi,
};
use untangle_core::goldset::read_labeled_jsonl;
use untangle_core::mining::{read_changes_jsonl, MethodChange};
use untangle_core::Label;

use super::{ensure_parent, require_file, to_pretty_json, write_json, Ctx};
use crate::args::{EmbedArgs, EmbedProviderArg, EvalArgs, RemoteApiArg, TrainArgs};
use crate::invalid;
use crate::manifest::Manifest;

/// Labeled rows if every line carries a label, else plain mined changes.
fn load_embed_input(path: &Path) -> anyhow::Result<Vec<(MethodChange, Option<Label>)>> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(labeled) = read_labeled_jsonl(text.as_bytes()) {
        return Ok(labeled.into_iter().map(|l| (l.change, Some(l.label))).collect());
    }
    let changes = read_changes_jsonl(text.as_bytes()).with_context(|| format!("reading {}", path.display()))?;
    Ok(changes.into_iter().map(|c| (c, None)).collect())
}

#[derive(Serialize)]
struct EmbedRunConfig<'a> {
    args: &'a EmbedArgs,
    embed: &'a EmbedConfig,
}

pub fn embed(ctx: &Ctx, args: EmbedArgs) -> anyhow::Result<()> {
    let mut cfg = ctx.file.embed.clone();
    if let Some(p) = args.provider {
        cfg.provider = match p {
            EmbedProviderArg::Local => EmbedProvider::LocalMock,
            EmbedProviderArg::Remote => EmbedProvider::Remote,
        };
    }
    if let Some(m) = &args.model_id {
        cfg.model_id = m.clone();
    }
    if let Some(t) = args.token_limit {
        cfg.token_limit = t;
    }
    if let Some(a) = args.remote_api {
        cfg.remote_api = match a {
            RemoteApiArg::Openai => RemoteApi::OpenaiCompatible,
            RemoteApiArg::Gemini => RemoteApi::GeminiCompatible,
        };
    }
    if args.base_url.is_some() {
        cfg.base_url = args.base_url.clone();
    }
    cfg.validate()?;

    let items = load_embed_input(&args.input)?;
    if items.is_empty() {
        return Err(invalid(format!("{} holds no changes", args.input.display())));
    }
    let cache = match &args.cache {
        Some(p) => {
            ensure_parent(p)?;
            EmbeddingCache::open(p).with_context(|| format!("opening embedding cache {}", p.display()))?
        }
        None => EmbeddingCache::in_memory(),
    };
    let embedder = Embedder::new(cfg.clone(), cache)?;
    let texts: Vec<(String, String)> =
        items.iter().map(|(c, _)| (c.commit.message.clone(), c.diff_text.clone())).collect();
    let vectors = embedder.embed_batch(&texts, ctx.exec);

    let mut records = Vec::with_capacity(items.len());
    for ((change, label), v) in items.iter().zip(vectors) {
        let vector = v.with_context(|| format!("embedding {}", change.change_id))?;
        records.push(EmbeddingRecord { change_id: change.change_id.clone(), label: *label, vector });
    }
    ensure_parent(&args.out)?;
    write_embeddings_jsonl(&records, &args.out)?;

    let mut manifest = Manifest::new("embed", EmbedRunConfig { args: &args, embed: &cfg })?;
    manifest.input(&args.input)?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;
    eprintln!("embedded {} changes with {}", records.len(), cfg.model_id);
    Ok(())
}

fn load_samples(path: &Path) -> anyhow::Result<Vec<Sample>> {
    require_file(path)?;
    let records = read_embeddings_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
    records
        .into_iter()
        .map(|r| {
            let label = r.label.ok_or_else(|| invalid(format!("embedding {} has no label", r.change_id)))?;
            Ok(Sample { id: r.change_id, features: r.vector.values, label })
        })
        .collect()
}

#[derive(Serialize)]
struct Summary<'a> {
    protocol: &'a str,
    n: usize,
    confusion: &'a untangle_core::metrics::ConfusionMatrix,
    metrics: &'a untangle_core::metrics::MetricsReport,
}

fn print_summary(report: &EvalReport) -> anyhow::Result<()> {
    let s = Summary { protocol: &report.protocol, n: report.n, confusion: &report.confusion, metrics: &report.metrics };
    print!("{}", to_pretty_json(&s)?);
    Ok(())
}

#[derive(Serialize)]
struct TrainRunConfig<'a, A: Serialize> {
    args: &'a A,
    train: &'a TrainConfig,
}

pub fn train(ctx: &Ctx, args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = ctx.file.train.clone();
    args.train.apply(&mut cfg);
    cfg.validate()?;
    if !(args.train_fraction > 0.0 && args.train_fraction <= 1.0) {
        return Err(invalid(format!("--train-fraction must be in (0, 1], got {}", args.train_fraction)));
    }
    let samples = load_samples(&args.input)?;

    let (model, report) = if args.train_fraction == 1.0 {
        (fit(&samples, &cfg, args.kind)?, None)
    } else {
        let (train_items, test_items) = split_dataset(&samples, args.train_fraction, cfg.seed)?;
        let model = fit(&train_items, &cfg, args.kind)?;
        let report = evaluate_model(&model, &test_items)?;
        (model, Some(report))
    };
    ensure_parent(&args.out)?;
    model.save(&args.out)?;

    let mut manifest = Manifest::new("train", TrainRunConfig { args: &args, train: &cfg })?;
    manifest.input(&args.input)?;
    manifest.output(&args.out)?;
    if let (Some(path), Some(r)) = (&args.report, &report) {
        write_json(path, r)?;
        manifest.output(path)?;
    }
    manifest.write_beside(&args.out)?;
    match &report {
        Some(r) => print_summary(r)?,
        None => eprintln!("trained on all {} items; no hold-out report", samples.len()),
    }
    Ok(())
}

pub fn eval(ctx: &Ctx, args: EvalArgs) -> anyhow::Result<()> {
    let mut cfg = ctx.file.train.clone();
    args.train.apply(&mut cfg);
    let samples = load_samples(&args.input)?;

    let mut manifest = Manifest::new("eval", TrainRunConfig { args: &args, train: &cfg })?;
    manifest.input(&args.input)?;
    let report = if args.loo {
        cfg.validate()?;
        evaluate_loo(&samples, &cfg, args.kind, ctx.exec)?
    } else {
        let path = args.model.as_ref().expect("clap requires --model without --loo");
        require_file(path)?;
        manifest.input(path)?;
        let model = ModelArtifact::load(path)?;
        evaluate_model(&model, &samples)?
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        manifest.output(out)?;
        manifest.write_beside(out)?;
    }
    print_summary(&report)
}

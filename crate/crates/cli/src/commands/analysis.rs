//! `metrics`, `denoise`, `stats` and `report`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use untangle_core::code_metrics::{
    metrics_table, write_metrics_csv, CodeMetrics, MetricsRow, ReadabilityWeights, METRIC_NAMES,
};
use untangle_core::denoise::{
    assemble_partitions, build_histories, separability_report, verdict_queries, MethodHistory, PartitionSet,
};
use untangle_core::mining::MethodChange;
use untangle_core::stats::{cliffs_delta, rank_sum_test, EffectCategory, TestMethod};
use untangle_core::{Exec, VerdictLabel};

use super::classify::{gateway, model_config, run_variant, PromptKit, VerdictRow};
use super::{load_changes, project_path, require_file, to_pretty_json, write_bytes, write_json, write_jsonl, Ctx};
use crate::args::{DenoiseArgs, MetricsArgs, ReportArgs, StatsArgs};
use crate::invalid;
use crate::manifest::Manifest;

/// Histories of every `PROJECT=FILE` argument, concatenated.
fn load_histories(
    args_list: &[String],
    reference_time: Option<i64>,
    manifest: &mut Manifest,
) -> anyhow::Result<Vec<MethodHistory>> {
    let mut seen = BTreeMap::new();
    let mut histories = Vec::new();
    for arg in args_list {
        let (project, path) = project_path(arg)?;
        if seen.insert(project.clone(), ()).is_some() {
            return Err(invalid(format!("project {project} given twice")));
        }
        let changes: Vec<MethodChange> = load_changes(&path)?;
        manifest.input(&path)?;
        histories.extend(build_histories(&project, &changes, reference_time));
    }
    Ok(histories)
}

/// Metrics of each history's first version. Methods without a parsable
/// first version are reported separately.
fn first_version_metrics(
    histories: &[MethodHistory],
    w: &ReadabilityWeights,
    exec: Exec,
) -> (Vec<MetricsRow>, Vec<String>) {
    let mut failed = Vec::new();
    let mut inputs = Vec::new();
    for h in histories {
        match &h.first_version_source {
            Some(src) => inputs.push((h.method_id.clone(), h.project.clone(), src.clone())),
            None => failed.push(h.method_id.clone()),
        }
    }
    let (rows, errors) = metrics_table(&inputs, w, exec);
    for (id, e) in errors {
        tracing::warn!(method = %id, "no metrics: {e}");
        failed.push(id);
    }
    (rows, failed)
}

pub fn metrics(ctx: &Ctx, args: MetricsArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("metrics", (&args, &ctx.file.readability))?;
    let histories = load_histories(&args.changes, None, &mut manifest)?;
    let (rows, failed) = first_version_metrics(&histories, &ctx.file.readability, ctx.exec);
    super::ensure_parent(&args.out)?;
    write_metrics_csv(&rows, &args.out)?;
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;
    eprintln!("{} methods measured, {} skipped", rows.len(), failed.len());
    Ok(())
}

#[derive(Serialize)]
struct DenoiseConfig<'a> {
    args: &'a DenoiseArgs,
    min_age_days: i64,
    model: Option<untangle_core::llm::ModelConfig>,
    readability: &'a ReadabilityWeights,
}

#[derive(Serialize)]
struct DenoiseSummary<'a> {
    verdicts_requested: usize,
    quarantined: usize,
    per_project: &'a BTreeMap<String, untangle_core::denoise::PartitionCounts>,
    excluded: &'a [untangle_core::denoise::ExcludedProject],
    unmeasured_methods: usize,
}

fn verdicts_from_file(
    path: &Path,
    variant: untangle_core::prompt::PromptVariant,
) -> anyhow::Result<HashMap<String, VerdictLabel>> {
    require_file(path)?;
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    let mut total = 0;
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: VerdictRow =
            serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), k + 1))?;
        total += 1;
        if row.variant == variant {
            map.insert(row.change_id, row.verdict);
        }
    }
    if total > 0 && map.is_empty() {
        return Err(invalid(format!("{} has no verdicts for variant {variant}", path.display())));
    }
    Ok(map)
}

pub fn denoise(ctx: &Ctx, args: DenoiseArgs) -> anyhow::Result<()> {
    let min_age = args.min_age_days.unwrap_or(ctx.file.goldset.min_age_days);
    let model = match &args.verdicts {
        Some(_) => None,
        None => Some(model_config(ctx, &args.llm)?),
    };
    let mut manifest = Manifest::new(
        "denoise",
        DenoiseConfig { args: &args, min_age_days: min_age, model: model.clone(), readability: &ctx.file.readability },
    )?;
    let histories = load_histories(&args.changes, args.reference_time, &mut manifest)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let out = |name: &str| args.out_dir.join(name);

    let verdicts = match (&args.verdicts, model) {
        (Some(path), _) => {
            manifest.input(path)?;
            verdicts_from_file(path, args.variant)?
        }
        (None, Some(cfg)) => {
            if let Some(r) = &cfg.responder {
                manifest.input(r)?;
            }
            let kit = PromptKit::load(args.llm.templates.as_deref())?;
            let gw = gateway(cfg, args.llm.cache_dir.as_deref())?;
            let queries: Vec<(&MethodChange, _)> = verdict_queries(&histories).into_iter().map(|c| (c, None)).collect();
            let rows = run_variant(&gw, &kit, args.variant, &queries, ctx.exec)?;
            write_jsonl(&out("verdicts.jsonl"), &rows)?;
            manifest.output(&out("verdicts.jsonl"))?;
            rows.into_iter().map(|r| (r.change_id, r.verdict)).collect()
        }
        (None, None) => unreachable!("model config is resolved when no verdict file is given"),
    };

    let mut partitions: PartitionSet = assemble_partitions(&histories, &verdicts, min_age);
    let (rows, failed) = first_version_metrics(&histories, &ctx.file.readability, ctx.exec);
    let measured: HashMap<String, CodeMetrics> = rows.iter().map(|r| (r.method_id.clone(), r.metrics())).collect();
    partitions.retain(|id| measured.contains_key(id));
    partitions.check_invariants()?;
    let report = separability_report(&partitions, &measured)?;

    write_json(&out("partitions.json"), &partitions)?;
    write_metrics_csv(&rows, &out("metrics.csv"))?;
    report.write_csv(&out("separability.csv"))?;
    report.write_aggregate_csv(&out("separability_aggregate.csv"))?;
    for name in ["partitions.json", "metrics.csv", "separability.csv", "separability_aggregate.csv"] {
        manifest.output(&out(name))?;
    }
    manifest.write(&out("manifest.json"))?;

    let summary = DenoiseSummary {
        verdicts_requested: partitions.verdicts_requested,
        quarantined: partitions.quarantined.len(),
        per_project: &partitions.per_project_counts,
        excluded: &report.excluded,
        unmeasured_methods: failed.len(),
    };
    print!("{}", to_pretty_json(&summary)?);
    Ok(())
}

/// Numeric columns of a CSV file, by header name.
fn read_columns(path: &Path) -> anyhow::Result<BTreeMap<String, Vec<f64>>> {
    require_file(path)?;
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut cols: Vec<Option<Vec<f64>>> = vec![Some(Vec::new()); headers.len()];
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            if let Some(Some(col)) = cols.get_mut(j) {
                match field.trim().parse::<f64>() {
                    Ok(v) => col.push(v),
                    // Non-numeric columns (ids, project names) drop out.
                    Err(_) if k == 0 => cols[j] = None,
                    Err(_) => {
                        return Err(invalid(format!(
                            "{}: non-numeric value {field:?} in column {} on row {}",
                            path.display(),
                            headers[j],
                            k + 2
                        )))
                    }
                }
            }
        }
    }
    Ok(headers.into_iter().zip(cols).filter_map(|(h, c)| c.map(|c| (h, c))).collect())
}

#[derive(Debug, Serialize)]
struct StatsRow {
    metric: String,
    n_a: usize,
    n_b: usize,
    u_statistic: f64,
    z: Option<f64>,
    p_value: f64,
    method: TestMethod,
    delta: f64,
    category: EffectCategory,
}

pub fn stats(args: StatsArgs) -> anyhow::Result<()> {
    let a = read_columns(&args.a)?;
    let b = read_columns(&args.b)?;
    let metrics: Vec<String> = if args.metrics.is_empty() {
        let found: Vec<String> =
            METRIC_NAMES.iter().filter(|m| a.contains_key(**m) && b.contains_key(**m)).map(|m| m.to_string()).collect();
        if found.is_empty() {
            return Err(invalid("no metric column is present in both files; pass --metric"));
        }
        found
    } else {
        args.metrics.clone()
    };

    let mut rows = Vec::new();
    for m in &metrics {
        let (Some(xa), Some(xb)) = (a.get(m), b.get(m)) else {
            return Err(invalid(format!("numeric column {m:?} missing from one of the files")));
        };
        let test = rank_sum_test(xa, xb).with_context(|| format!("metric {m}"))?;
        let effect = cliffs_delta(xa, xb).with_context(|| format!("metric {m}"))?;
        rows.push(StatsRow {
            metric: m.clone(),
            n_a: xa.len(),
            n_b: xb.len(),
            u_statistic: test.u_statistic,
            z: test.z,
            p_value: test.p_two_sided,
            method: test.method,
            delta: effect.delta,
            category: effect.category,
        });
    }
    let text = to_pretty_json(&rows)?;
    if let Some(out) = &args.out {
        write_bytes(out, text.as_bytes())?;
        let mut manifest = Manifest::new("stats", &args)?;
        manifest.input(&args.a)?;
        manifest.input(&args.b)?;
        manifest.output(out)?;
        manifest.write_beside(out)?;
    }
    print!("{text}");
    Ok(())
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn fmt3(v: Option<&serde_json::Value>) -> String {
    match v.and_then(|v| v.as_f64()) {
        Some(x) => format!("{x:.3}"),
        None => "-".to_string(),
    }
}

pub fn report(args: ReportArgs) -> anyhow::Result<()> {
    if !args.dir.is_dir() {
        return Err(invalid(format!("directory {} not found", args.dir.display())));
    }
    let mut files = Vec::new();
    collect_files(&args.dir, &mut files)?;
    let rel = |p: &Path| p.strip_prefix(&args.dir).unwrap_or(p).display().to_string();

    let mut llm = String::new();
    let mut models = String::new();
    let mut partitions = String::new();
    let mut separability = String::new();
    let mut inputs = Vec::new();
    for path in &files {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with("manifest.json") || *path == args.out {
            continue;
        }
        if name.ends_with(".json") {
            let Ok(v) = serde_json::from_slice::<serde_json::Value>(&std::fs::read(path)?) else {
                continue;
            };
            let Some(obj) = v.as_object() else { continue };
            if obj.contains_key("protocol") && obj.contains_key("metrics") {
                let m = &obj["metrics"];
                writeln!(
                    models,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    rel(path),
                    obj["model_kind"].as_str().unwrap_or("-"),
                    obj["protocol"].as_str().unwrap_or("-"),
                    obj["n"],
                    fmt3(m.get("accuracy")),
                    fmt3(m.get("precision")),
                    fmt3(m.get("recall")),
                    fmt3(m.get("f1")),
                    fmt3(m.get("mcc"))
                )?;
            } else if obj.contains_key("per_project_counts") {
                if let Some(counts) = obj["per_project_counts"].as_object() {
                    for (project, c) in counts {
                        writeln!(
                            partitions,
                            "| {project} | {} | {} | {} | {} | {} |",
                            c["noisy_buggy"],
                            c["noisy_notbuggy"],
                            c["less_noisy_buggy"],
                            c["less_noisy_notbuggy"],
                            c["quarantined"]
                        )?;
                    }
                }
            } else if obj.values().all(|v| v.get("metrics").is_some() && v.get("model_id").is_some()) && !obj.is_empty()
            {
                for (variant, v) in obj {
                    let m = &v["metrics"];
                    writeln!(
                        llm,
                        "| {} | {} | {variant} | {} | {} | {} | {} | {} | {} | {} |",
                        rel(path),
                        v["model_id"].as_str().unwrap_or("-"),
                        v["n"],
                        fmt3(m.get("accuracy")),
                        fmt3(m.get("precision")),
                        fmt3(m.get("recall")),
                        fmt3(m.get("f1")),
                        fmt3(m.get("mcc")),
                        m["unparseable_count"]
                    )?;
                }
            } else {
                continue;
            }
            inputs.push(path.clone());
        } else if name == "separability_aggregate.csv" {
            let mut r = csv::Reader::from_path(path)?;
            for rec in r.records() {
                let rec = rec?;
                let cells: Vec<&str> = rec.iter().collect();
                writeln!(separability, "| {} |", cells.join(" | "))?;
            }
            inputs.push(path.clone());
        }
    }

    let mut md = String::from("# Untangling report\n");
    if !llm.is_empty() {
        md.push_str("\n## LLM classification\n\n| file | model | variant | n | accuracy | precision | recall | f1 | mcc | unparseable |\n|---|---|---|---|---|---|---|---|---|---|\n");
        md.push_str(&llm);
    }
    if !models.is_empty() {
        md.push_str("\n## Embedding classifiers\n\n| file | model | protocol | n | accuracy | precision | recall | f1 | mcc |\n|---|---|---|---|---|---|---|---|---|\n");
        md.push_str(&models);
    }
    if !partitions.is_empty() {
        md.push_str("\n## Partitions\n\n| project | noisy buggy | noisy notbuggy | less-noisy buggy | less-noisy notbuggy | quarantined |\n|---|---|---|---|---|---|\n");
        md.push_str(&partitions);
    }
    if !separability.is_empty() {
        md.push_str("\n## Separability (share of projects per effect category, %)\n\n| metric | dataset | projects | negligible | small | medium | large | significant |\n|---|---|---|---|---|---|---|---|\n");
        md.push_str(&separability);
    }
    if inputs.is_empty() {
        md.push_str("\nNo recognized stage outputs found.\n");
    }
    write_bytes(&args.out, md.as_bytes())?;

    let mut manifest = Manifest::new("report", &args)?;
    for p in &inputs {
        manifest.input(p)?;
    }
    manifest.output(&args.out)?;
    manifest.write_beside(&args.out)?;
    eprintln!("summarized {} files into {}", inputs.len(), args.out.display());
    Ok(())
}

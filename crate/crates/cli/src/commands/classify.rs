//! `classify-llm` and the LLM plumbing `denoise` shares with it.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use untangle_core::digest::sha256_hex;
use untangle_core::llm::{Gateway, LlmError, ModelConfig, ProviderKind, ResponseCache};
use untangle_core::metrics::{classification_metrics, ConfusionMatrix, MetricsReport};
use untangle_core::mining::MethodChange;
use untangle_core::prompt::{
    builtin_example_pair, render_prompt_with, ExamplePair, InstructionWording, PromptTemplates, PromptVariant,
};
use untangle_core::{Exec, Label, VerdictLabel};

use super::{load_labeled, to_pretty_json, write_bytes, write_jsonl, Ctx};
use crate::args::{ClassifyArgs, LlmArgs, ProviderArg};
use crate::invalid;
use crate::manifest::Manifest;

/// One LLM verdict as written to disk. Latency and cache flags are left
/// out so reruns produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub change_id: String,
    pub variant: PromptVariant,
    pub model_id: String,
    pub verdict: VerdictLabel,
    #[serde(default)]
    pub truth: Option<Label>,
    pub reasoning: Option<String>,
    pub raw: String,
    pub prompt_sha256: String,
}

/// Templates, instruction wording and few-shot pair used for rendering.
pub struct PromptKit {
    templates: PromptTemplates,
    wording: InstructionWording,
    examples: ExamplePair,
}

impl PromptKit {
    pub fn load(dir: Option<&Path>) -> anyhow::Result<Self> {
        let Some(dir) = dir else {
            return Ok(Self {
                templates: PromptTemplates::default(),
                wording: InstructionWording::default(),
                examples: builtin_example_pair(),
            });
        };
        if !dir.is_dir() {
            return Err(invalid(format!("template directory {} not found", dir.display())));
        }
        let templates = PromptTemplates::load_dir(dir)?;
        let wording_path = dir.join("instructions.toml");
        let wording = if wording_path.is_file() {
            toml::from_str(&std::fs::read_to_string(&wording_path)?)
                .with_context(|| format!("invalid {}", wording_path.display()))?
        } else {
            InstructionWording::default()
        };
        let examples_path = dir.join("examples.json");
        let examples = if examples_path.is_file() {
            serde_json::from_str(&std::fs::read_to_string(&examples_path)?)
                .with_context(|| format!("invalid {}", examples_path.display()))?
        } else {
            builtin_example_pair()
        };
        Ok(Self { templates, wording, examples })
    }

    pub fn render(
        &self,
        variant: PromptVariant,
        change: &MethodChange,
    ) -> Result<String, untangle_core::prompt::PromptError> {
        render_prompt_with(&self.templates, variant, change, &self.wording.block(variant), Some(&self.examples))
    }
}

/// Effective model config: file section, then flags. `--model mock`
/// selects the offline provider.
pub fn model_config(ctx: &Ctx, args: &LlmArgs) -> anyhow::Result<ModelConfig> {
    let mut cfg = ctx.file.llm.clone();
    if let Some(m) = &args.model {
        cfg.model_id = m.clone();
        if m == "mock" {
            cfg.provider = ProviderKind::Mock;
        }
    }
    if let Some(p) = args.provider {
        cfg.provider = match p {
            ProviderArg::Openai => ProviderKind::OpenaiCompatible,
            ProviderArg::Gemini => ProviderKind::GeminiCompatible,
            ProviderArg::Mock => ProviderKind::Mock,
        };
    }
    if let Some(r) = &args.responder {
        if !r.is_file() {
            return Err(invalid(format!("responder file {} not found", r.display())));
        }
        cfg.responder = Some(r.clone());
    }
    if args.base_url.is_some() {
        cfg.base_url = args.base_url.clone();
    }
    if let Some(t) = args.temperature {
        cfg.temperature = t;
    }
    if let Some(n) = args.max_in_flight {
        cfg.max_in_flight = n.max(1);
    }
    if let Some(r) = args.requests_per_second {
        cfg.requests_per_second = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn gateway(cfg: ModelConfig, cache_dir: Option<&Path>) -> anyhow::Result<Gateway> {
    let cache = match cache_dir {
        Some(dir) => ResponseCache::open(dir).with_context(|| format!("opening cache {}", dir.display()))?,
        None => ResponseCache::in_memory(),
    };
    Ok(Gateway::new(cfg, Arc::new(cache))?)
}

/// Query one variant over `changes`. Prompts that cannot be rendered and
/// provider failures become `Unparseable`; authentication and config
/// errors abort the run.
pub fn run_variant(
    gateway: &Gateway,
    kit: &PromptKit,
    variant: PromptVariant,
    changes: &[(&MethodChange, Option<Label>)],
    exec: Exec,
) -> anyhow::Result<Vec<VerdictRow>> {
    let model_id = gateway.config().model_id.clone();
    let rendered: Vec<Option<String>> = changes
        .iter()
        .map(|(c, _)| match kit.render(variant, c) {
            Ok(p) => Some(p),
            Err(e) => {
                tracing::warn!(change = %c.change_id, %variant, "cannot render prompt: {e}");
                None
            }
        })
        .collect();
    let prompts: Vec<String> = rendered.iter().flatten().cloned().collect();
    let mut results = gateway.classify_batch(&prompts, variant, exec).into_iter();

    let mut rows = Vec::with_capacity(changes.len());
    for ((change, truth), prompt) in changes.iter().zip(&rendered) {
        let mut row = VerdictRow {
            change_id: change.change_id.clone(),
            variant,
            model_id: model_id.clone(),
            verdict: VerdictLabel::Unparseable,
            truth: *truth,
            reasoning: None,
            raw: String::new(),
            prompt_sha256: String::new(),
        };
        if let Some(prompt) = prompt {
            row.prompt_sha256 = sha256_hex(prompt);
            match results.next().expect("one result per prompt") {
                Ok(v) => {
                    row.verdict = v.label;
                    row.reasoning = v.reasoning;
                    row.raw = v.raw;
                }
                Err(e @ (LlmError::AuthFailure(_) | LlmError::Config(_))) => {
                    return Err(e).context(format!("classifying {}", change.change_id));
                }
                Err(e) => tracing::warn!(change = %change.change_id, %variant, "no verdict: {e}"),
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
pub struct VariantMetrics {
    pub model_id: String,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// Score verdicts against their truth labels; unparseable verdicts are
/// counted but left out of the confusion matrix.
pub fn score_rows(rows: &[VerdictRow], model_id: &str) -> VariantMetrics {
    let mut cm = ConfusionMatrix::default();
    let mut unparseable = 0;
    for r in rows {
        match (r.verdict.label(), r.truth) {
            (Some(p), Some(t)) => cm.record(p, t, Label::Buggy),
            (None, _) => unparseable += 1,
            (Some(_), None) => {}
        }
    }
    VariantMetrics {
        model_id: model_id.to_string(),
        n: rows.len(),
        confusion: cm,
        metrics: classification_metrics(&cm, unparseable),
    }
}

#[derive(Serialize)]
struct ClassifyConfig<'a> {
    args: &'a ClassifyArgs,
    model: &'a ModelConfig,
}

pub fn classify_llm(ctx: &Ctx, args: ClassifyArgs) -> anyhow::Result<()> {
    let cfg = model_config(ctx, &args.llm)?;
    let kit = PromptKit::load(args.llm.templates.as_deref())?;
    let labeled = load_labeled(&args.input)?;
    if labeled.is_empty() {
        return Err(invalid(format!("{} holds no labeled changes", args.input.display())));
    }
    let variants = if args.variants.is_empty() {
        PromptVariant::ALL.to_vec()
    } else {
        let mut v = args.variants.clone();
        v.dedup();
        v
    };
    let gw = gateway(cfg.clone(), args.llm.cache_dir.as_deref())?;
    let items: Vec<(&MethodChange, Option<Label>)> = labeled.iter().map(|l| (&l.change, Some(l.label))).collect();

    let mut all_rows = Vec::new();
    let mut report = BTreeMap::new();
    for variant in variants {
        let rows = run_variant(&gw, &kit, variant, &items, ctx.exec)?;
        report.insert(variant.name().to_string(), score_rows(&rows, &cfg.model_id));
        all_rows.extend(rows);
    }
    tracing::info!(requests = gw.provider_requests(), "provider requests sent");

    let mut manifest = Manifest::new("classify-llm", ClassifyConfig { args: &args, model: &cfg })?;
    manifest.input(&args.input)?;
    if let Some(r) = &cfg.responder {
        manifest.input(r)?;
    }
    let text = to_pretty_json(&report)?;
    if let Some(out) = &args.out {
        write_jsonl(out, &all_rows)?;
        manifest.output(out)?;
    }
    if let Some(out) = &args.metrics_out {
        write_bytes(out, text.as_bytes())?;
        manifest.output(out)?;
    }
    if let Some(first) = args.out.as_ref().or(args.metrics_out.as_ref()) {
        manifest.write_beside(first)?;
    }
    print!("{text}");
    Ok(())
}

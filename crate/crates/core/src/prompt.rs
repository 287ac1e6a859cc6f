//! Prompt rendering for the five classification variants.
//!
//! A prompt is the instruction block (persona, task, numbered steps, output
//! format), optionally one labeled example per class, and the query. The
//! wording lives in text assets under `assets/templates`; the defaults are
//! compiled in and can be replaced at runtime.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::mining::{compute_method_diff, extract_methods, MethodChange, ParserConfig};

pub const DEFAULT_MAX_PROMPT_CHARS: usize = 60_000;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("variant {0} needs a few-shot example pair")]
    MissingExamples(PromptVariant),
    #[error("variant {0} needs a non-empty commit message")]
    MissingMessage(PromptVariant),
    #[error("change has an empty diff")]
    EmptyDiff,
    #[error("prompt is {len} characters, limit is {max}")]
    PromptTooLarge { len: usize, max: usize },
    #[error("unknown prompt variant {0:?}")]
    UnknownVariant(String),
    #[error("cannot load templates: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    DiffOnly,
    DiffMessage,
    FewShot,
    ChainOfThought,
    FewShotCot,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 5] = [
        PromptVariant::DiffOnly,
        PromptVariant::DiffMessage,
        PromptVariant::FewShot,
        PromptVariant::ChainOfThought,
        PromptVariant::FewShotCot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::DiffOnly => "diff-only",
            PromptVariant::DiffMessage => "diff-message",
            PromptVariant::FewShot => "fewshot",
            PromptVariant::ChainOfThought => "cot",
            PromptVariant::FewShotCot => "fewshot-cot",
        }
    }

    pub fn uses_message(self) -> bool {
        self != PromptVariant::DiffOnly
    }

    pub fn uses_examples(self) -> bool {
        matches!(self, PromptVariant::FewShot | PromptVariant::FewShotCot)
    }

    pub fn expects_reasoning(self) -> bool {
        matches!(self, PromptVariant::ChainOfThought | PromptVariant::FewShotCot)
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptVariant {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diff-only" | "diffonly" => Ok(PromptVariant::DiffOnly),
            "diff-message" | "diff+message" | "diffmessage" => Ok(PromptVariant::DiffMessage),
            "fewshot" | "few-shot" => Ok(PromptVariant::FewShot),
            "cot" | "chain-of-thought" => Ok(PromptVariant::ChainOfThought),
            "fewshot-cot" | "few-shot-cot" | "hybrid" => Ok(PromptVariant::FewShotCot),
            other => Err(PromptError::UnknownVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionBlock {
    pub persona: String,
    pub task_description: String,
    pub behavioral_steps: Vec<String>,
    pub output_format: String,
}

/// The editable wording from which instruction blocks are assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionWording {
    pub persona: String,
    pub task_with_message: String,
    pub task_diff_only: String,
    pub steps_with_message: Vec<String>,
    pub steps_diff_only: Vec<String>,
    pub format_single_word: String,
    pub format_reasoning: String,
}

impl Default for InstructionWording {
    fn default() -> Self {
        toml::from_str(include_str!("../assets/templates/instructions.toml"))
            .expect("bundled instruction wording parses")
    }
}

impl InstructionWording {
    pub fn block(&self, variant: PromptVariant) -> InstructionBlock {
        let (task, steps) = if variant.uses_message() {
            (&self.task_with_message, &self.steps_with_message)
        } else {
            (&self.task_diff_only, &self.steps_diff_only)
        };
        let format = if variant.expects_reasoning() { &self.format_reasoning } else { &self.format_single_word };
        InstructionBlock {
            persona: self.persona.clone(),
            task_description: task.clone(),
            behavioral_steps: steps.clone(),
            output_format: format.clone(),
        }
    }
}

pub fn default_instructions(variant: PromptVariant) -> InstructionBlock {
    InstructionWording::default().block(variant)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub message: String,
    pub diff: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub buggy_example: Example,
    pub notbuggy_example: Example,
}

/// The fixed few-shot pair, both taken from one tangled commit of the
/// bundled `HexCodec` fixture: `toHex` masks signed bytes before shifting
/// (Buggy), `isUpperCase` swaps `Boolean` constants for literals (NotBuggy).
pub fn builtin_example_pair() -> ExamplePair {
    let before = include_str!("../assets/fewshot/HexCodec.before.java");
    let after = include_str!("../assets/fewshot/HexCodec.after.java");
    let message = include_str!("../assets/fewshot/message.txt").trim().to_string();
    let cfg = ParserConfig::default();
    let old = extract_methods(before, &cfg).expect("bundled fixture parses");
    let new = extract_methods(after, &cfg).expect("bundled fixture parses");
    let diff_of = |sig: &str| {
        let find = |ms: &[crate::mining::ExtractedMethod]| {
            ms.iter().find(|m| m.signature == sig).map(|m| m.source.clone()).expect("fixture method")
        };
        compute_method_diff(&find(&old), &find(&new)).expect("fixture method changed")
    };
    ExamplePair {
        buggy_example: Example {
            message: message.clone(),
            diff: diff_of("HexCodec.toHex(byte[])"),
            label: Label::Buggy,
        },
        notbuggy_example: Example {
            message,
            diff: diff_of("HexCodec.isUpperCase(Properties)"),
            label: Label::NotBuggy,
        },
    }
}

/// Template texts with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub prompt: String,
    pub query_message: String,
    pub query_diff_only: String,
    pub example: String,
    pub max_chars: usize,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            prompt: include_str!("../assets/templates/prompt.txt").to_string(),
            query_message: include_str!("../assets/templates/query_message.txt").to_string(),
            query_diff_only: include_str!("../assets/templates/query_diff_only.txt").to_string(),
            example: include_str!("../assets/templates/example.txt").to_string(),
            max_chars: DEFAULT_MAX_PROMPT_CHARS,
        }
    }
}

impl PromptTemplates {
    /// Load templates from a directory laid out like `assets/templates`;
    /// files that are absent keep their default.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Self::default();
        for (name, slot) in [
            ("prompt.txt", &mut t.prompt),
            ("query_message.txt", &mut t.query_message),
            ("query_diff_only.txt", &mut t.query_diff_only),
            ("example.txt", &mut t.example),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
            }
        }
        Ok(t)
    }
}

/// Replace `{name}` placeholders in one pass; inserted values are never
/// rescanned, and unknown `{...}` text is copied through.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            values.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn render_examples(templates: &PromptTemplates, pair: &ExamplePair) -> String {
    let mut out = String::from("\n### Examples\n\n");
    let examples = [&pair.buggy_example, &pair.notbuggy_example];
    for (k, ex) in examples.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let index = (k + 1).to_string();
        out.push_str(&fill(
            &templates.example,
            &[("index", &index), ("message", &ex.message), ("diff", &ex.diff), ("label", ex.label.as_str())],
        ));
    }
    out
}

pub fn render_prompt(
    variant: PromptVariant,
    change: &MethodChange,
    instructions: &InstructionBlock,
    examples: Option<&ExamplePair>,
) -> Result<String, PromptError> {
    render_prompt_with(&PromptTemplates::default(), variant, change, instructions, examples)
}

/// Render one prompt. Examples are only used by the few-shot variants.
pub fn render_prompt_with(
    templates: &PromptTemplates,
    variant: PromptVariant,
    change: &MethodChange,
    instructions: &InstructionBlock,
    examples: Option<&ExamplePair>,
) -> Result<String, PromptError> {
    if change.diff_text.is_empty() {
        return Err(PromptError::EmptyDiff);
    }
    let examples_text = match (variant.uses_examples(), examples) {
        (true, Some(pair)) => render_examples(templates, pair),
        (true, None) => return Err(PromptError::MissingExamples(variant)),
        (false, _) => String::new(),
    };
    let query = if variant.uses_message() {
        let message = change.commit.message.trim();
        if message.is_empty() {
            return Err(PromptError::MissingMessage(variant));
        }
        fill(&templates.query_message, &[("message", message), ("diff", &change.diff_text)])
    } else {
        fill(&templates.query_diff_only, &[("diff", &change.diff_text)])
    };
    let steps = instructions
        .behavioral_steps
        .iter()
        .enumerate()
        .map(|(k, s)| format!("{}. {}", k + 1, s))
        .collect::<Vec<_>>()
        .join("\n");
    let text = fill(
        &templates.prompt,
        &[
            ("persona", &instructions.persona),
            ("task", &instructions.task_description),
            ("steps", &steps),
            ("format", &instructions.output_format),
            ("examples", &examples_text),
            ("query", &query),
        ],
    );
    let len = text.chars().count();
    if len > templates.max_chars {
        return Err(PromptError::PromptTooLarge { len, max: templates.max_chars });
    }
    Ok(text)
}

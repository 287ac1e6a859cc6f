//! Per-method code metrics: size, readability, McCabe complexity, fan-out
//! and maintainability index.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::lexer::{self, Token, TokenKind};

#[derive(Debug, thiserror::Error)]
pub enum CodeMetricsError {
    #[error("cannot parse method source: {0}")]
    ParseFailure(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<lexer::LexError> for CodeMetricsError {
    fn from(e: lexer::LexError) -> Self {
        CodeMetricsError::ParseFailure(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeMetrics {
    pub size: u64,
    pub readability: f64,
    pub mccabe: u64,
    pub fan_out: u64,
    pub mi: f64,
}

/// The five metric names, in report order.
pub const METRIC_NAMES: [&str; 5] = ["size", "readability", "mccabe", "fan_out", "mi"];

impl CodeMetrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "size" => self.size as f64,
            "readability" => self.readability,
            "mccabe" => self.mccabe as f64,
            "fan_out" => self.fan_out as f64,
            "mi" => self.mi,
            _ => return None,
        })
    }
}

/// Lines holding at least one non-comment token.
pub fn sloc(src: &str) -> u64 {
    match lexer::tokenize(src) {
        Ok(tokens) => {
            let mut lines = BTreeSet::new();
            for t in tokens.iter().filter(|t| !t.is_comment()) {
                let span = t.text.matches('\n').count();
                lines.extend(t.line..=t.line + span);
            }
            lines.len() as u64
        }
        // Unlexable text: count non-blank lines that do not open with a
        // comment marker.
        Err(_) => src
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("//") && !l.starts_with("/*") && !l.starts_with('*'))
            .count() as u64,
    }
}

fn is_wildcard(tokens: &[Token<'_>], k: usize) -> bool {
    let prev = k.checked_sub(1).map(|p| &tokens[p]);
    let next = tokens.get(k + 1);
    prev.is_some_and(|p| p.is_op("<") || p.is_op(","))
        && next.is_some_and(|n| {
            n.is_op(">")
                || n.is_op(",")
                || n.is_op(">>")
                || n.is_op(">>>")
                || n.is_keyword("extends")
                || n.is_keyword("super")
        })
}

// `do` is absent on purpose: a do-while loop is counted once, by its `while`.
const DECISION_KEYWORDS: &[&str] = &["if", "for", "while", "case", "catch"];

/// 1 + decision points: `if for while case catch`, ternary `?`, `&&`, `||`.
pub fn mccabe(src: &str) -> Result<u64, CodeMetricsError> {
    let tokens = lexer::code_tokens(src)?;
    let decisions = tokens
        .iter()
        .enumerate()
        .filter(|(k, t)| match t.kind {
            TokenKind::Keyword => DECISION_KEYWORDS.contains(&t.text),
            TokenKind::Op => t.text == "&&" || t.text == "||" || (t.text == "?" && !is_wildcard(&tokens, *k)),
            _ => false,
        })
        .count();
    Ok(1 + decisions as u64)
}

/// Distinct callee names in the body: identifiers directly followed by an
/// argument list, ignoring keywords, annotations and constructor calls.
pub fn fan_out(src: &str) -> Result<u64, CodeMetricsError> {
    let tokens = lexer::code_tokens(src)?;
    let Some(open) = tokens.iter().position(|t| t.is_op("{")) else {
        return Ok(0);
    };
    let body = &tokens[open + 1..];
    let mut names = HashSet::new();
    let mut after_new = false;
    for (k, t) in body.iter().enumerate() {
        if t.is_keyword("new") {
            after_new = true;
            continue;
        }
        if after_new {
            // Skip the constructed type up to its argument list or
            // array brackets.
            if t.is_op("(") || t.is_op("[") || t.is_op("{") {
                after_new = false;
            }
            continue;
        }
        let calls = t.kind == TokenKind::Ident && body.get(k + 1).is_some_and(|n| n.is_op("("));
        let annotation = k > 0 && body[k - 1].is_op("@");
        if calls && !annotation {
            names.insert(t.text);
        }
    }
    Ok(names.len() as u64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalsteadCounts {
    pub distinct_operators: u64,
    pub distinct_operands: u64,
    pub total_operators: u64,
    pub total_operands: u64,
}

impl HalsteadCounts {
    pub fn vocabulary(&self) -> u64 {
        self.distinct_operators + self.distinct_operands
    }

    pub fn length(&self) -> u64 {
        self.total_operators + self.total_operands
    }

    /// `N · log2(η)`, or 0 when the vocabulary has fewer than two words.
    pub fn volume(&self) -> f64 {
        let eta = self.vocabulary();
        if eta < 2 {
            return 0.0;
        }
        self.length() as f64 * (eta as f64).log2()
    }
}

fn is_operand(t: &Token<'_>) -> bool {
    match t.kind {
        TokenKind::Ident | TokenKind::Number | TokenKind::Str | TokenKind::Char => true,
        TokenKind::Keyword => matches!(t.text, "true" | "false" | "null"),
        _ => false,
    }
}

/// Identifiers and literals are operands; operators, punctuation and
/// keywords are operators.
pub fn halstead_counts(src: &str) -> Result<HalsteadCounts, CodeMetricsError> {
    let tokens = lexer::code_tokens(src)?;
    let (mut ops, mut rands) = (HashSet::new(), HashSet::new());
    let mut counts = HalsteadCounts::default();
    for t in &tokens {
        if is_operand(t) {
            rands.insert(t.text);
            counts.total_operands += 1;
        } else {
            ops.insert(t.text);
            counts.total_operators += 1;
        }
    }
    counts.distinct_operators = ops.len() as u64;
    counts.distinct_operands = rands.len() as u64;
    Ok(counts)
}

pub fn halstead_volume(src: &str) -> Result<f64, CodeMetricsError> {
    let counts = halstead_counts(src)?;
    if counts.length() == 0 {
        return Err(CodeMetricsError::ParseFailure("no tokens".into()));
    }
    Ok(counts.volume())
}

/// `max(0, 171 − 5.2·ln V − 0.23·CC − 16.2·ln SLOC)` with V and SLOC
/// floored at 1.
pub fn maintainability_index_from(volume: f64, cc: u64, sloc: u64) -> f64 {
    let v = volume.max(1.0);
    let s = (sloc.max(1)) as f64;
    (171.0 - 5.2 * v.ln() - 0.23 * cc as f64 - 16.2 * s.ln()).max(0.0)
}

pub fn maintainability_index(src: &str) -> Result<f64, CodeMetricsError> {
    Ok(maintainability_index_from(halstead_volume(src)?, mccabe(src)?, sloc(src)))
}

/// Weights of the readability surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReadabilityWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
}

impl Default for ReadabilityWeights {
    fn default() -> Self {
        Self { w0: 4.0, w1: 0.05, w2: 0.01, w3: 0.1, w4: 2.0, w5: 1.0 }
    }
}

/// Inputs of the readability surrogate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReadabilityFeatures {
    pub avg_line_length: f64,
    pub max_line_length: f64,
    pub avg_identifier_length: f64,
    /// Branching keywords per non-blank line.
    pub branch_keyword_density: f64,
    /// Lines carrying a comment, per non-blank line.
    pub comment_density: f64,
}

const BRANCH_KEYWORDS: &[&str] = &["if", "else", "for", "while", "do", "switch", "case", "catch"];

pub fn readability_features(src: &str) -> ReadabilityFeatures {
    let lines: Vec<&str> = src.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return ReadabilityFeatures::default();
    }
    let n = lines.len() as f64;
    let lengths: Vec<f64> = lines.iter().map(|l| l.chars().count() as f64).collect();
    let mut f = ReadabilityFeatures {
        avg_line_length: lengths.iter().sum::<f64>() / n,
        max_line_length: lengths.iter().copied().fold(0.0, f64::max),
        ..Default::default()
    };
    if let Ok(tokens) = lexer::tokenize(src) {
        let idents: Vec<usize> =
            tokens.iter().filter(|t| t.kind == TokenKind::Ident).map(|t| t.text.chars().count()).collect();
        if !idents.is_empty() {
            f.avg_identifier_length = idents.iter().sum::<usize>() as f64 / idents.len() as f64;
        }
        let branches =
            tokens.iter().filter(|t| t.kind == TokenKind::Keyword && BRANCH_KEYWORDS.contains(&t.text)).count();
        f.branch_keyword_density = branches as f64 / n;
        let mut comment_lines = BTreeSet::new();
        for t in tokens.iter().filter(|t| t.is_comment()) {
            comment_lines.extend(t.line..=t.line + t.text.matches('\n').count());
        }
        let comment_lines =
            comment_lines.into_iter().filter(|l| src.lines().nth(l - 1).is_some_and(|s| !s.trim().is_empty())).count();
        f.comment_density = comment_lines as f64 / n;
    }
    f
}

/// Logistic surrogate score in [0, 1]; higher reads easier.
pub fn readability_from(f: &ReadabilityFeatures, w: &ReadabilityWeights) -> f64 {
    let z = w.w0
        - w.w1 * f.avg_line_length
        - w.w2 * f.max_line_length
        - w.w3 * f.avg_identifier_length
        - w.w4 * f.branch_keyword_density
        + w.w5 * f.comment_density;
    1.0 / (1.0 + (-z).exp())
}

pub fn readability(src: &str, w: &ReadabilityWeights) -> f64 {
    readability_from(&readability_features(src), w)
}

pub fn compute_metrics(src: &str, w: &ReadabilityWeights) -> Result<CodeMetrics, CodeMetricsError> {
    let size = sloc(src);
    let cc = mccabe(src)?;
    Ok(CodeMetrics {
        size,
        readability: readability(src, w),
        mccabe: cc,
        fan_out: fan_out(src)?,
        mi: maintainability_index_from(halstead_volume(src)?, cc, size),
    })
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method_id: String,
    pub project: String,
    pub size: u64,
    pub readability: f64,
    pub mccabe: u64,
    pub fan_out: u64,
    pub mi: f64,
}

impl MetricsRow {
    pub fn new(method_id: &str, project: &str, m: &CodeMetrics) -> Self {
        Self {
            method_id: method_id.to_string(),
            project: project.to_string(),
            size: m.size,
            readability: m.readability,
            mccabe: m.mccabe,
            fan_out: m.fan_out,
            mi: m.mi,
        }
    }

    pub fn metrics(&self) -> CodeMetrics {
        CodeMetrics {
            size: self.size,
            readability: self.readability,
            mccabe: self.mccabe,
            fan_out: self.fan_out,
            mi: self.mi,
        }
    }
}

/// Compute rows for `(method_id, project, source)` triples, in input
/// order. Methods that fail to parse are returned separately.
pub fn metrics_table(
    methods: &[(String, String, String)],
    w: &ReadabilityWeights,
    exec: Exec,
) -> (Vec<MetricsRow>, Vec<(String, CodeMetricsError)>) {
    let results =
        exec.map(methods, |(id, project, src)| compute_metrics(src, w).map(|m| MetricsRow::new(id, project, &m)));
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for ((id, _, _), r) in methods.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failed.push((id.clone(), e)),
        }
    }
    (rows, failed)
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<(), CodeMetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, CodeMetricsError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?)
}

//! Gold dataset construction: automated labeling rules, human annotation,
//! inter-rater agreement and export.

mod annotation;
mod kappa;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

pub use annotation::{AnnotationRecord, AnnotationStore, ADJUDICATOR};
pub use kappa::{cohens_kappa, KappaResult};

use crate::digest::sha256_hex;
use crate::label::Label;
use crate::mining::{MethodChange, MethodChangeRow};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, thiserror::Error)]
pub enum GoldsetError {
    #[error("empty input")]
    EmptyInput,
    #[error("rating sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("unknown change id {0}")]
    UnknownChange(String),
    #[error(transparent)]
    InvalidLabel(#[from] crate::label::InvalidLabel),
    #[error("rater id must be non-empty")]
    InvalidRater,
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("malformed record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelSource {
    AutoSingleMethodFix,
    AutoNeverInFix,
    HumanRater,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledChange {
    pub change: MethodChange,
    pub label: Label,
    pub label_source: LabelSource,
    pub rater_id: Option<String>,
    pub note: Option<String>,
}

impl LabeledChange {
    pub fn to_row(&self) -> LabeledRow {
        LabeledRow {
            change: self.change.to_row(),
            label: self.label,
            label_source: self.label_source,
            rater_id: self.rater_id.clone(),
            note: self.note.clone(),
        }
    }
}

/// JSONL form: the method change fields plus the label columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRow {
    #[serde(flatten)]
    pub change: MethodChangeRow,
    pub label: Label,
    pub label_source: LabelSource,
    pub rater_id: Option<String>,
    pub note: Option<String>,
}

impl From<LabeledRow> for LabeledChange {
    fn from(row: LabeledRow) -> Self {
        LabeledChange {
            change: row.change.into(),
            label: row.label,
            label_source: row.label_source,
            rater_id: row.rater_id,
            note: row.note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoldsetConfig {
    /// Upper bound on sampled NotBuggy examples.
    pub notbuggy_cap: usize,
    pub seed: u64,
    /// Minimum age for a never-fixed method to count as NotBuggy.
    pub min_age_days: i64,
    /// Time the ages are measured at; defaults to the newest change.
    pub reference_time: Option<i64>,
}

impl Default for GoldsetConfig {
    fn default() -> Self {
        Self { notbuggy_cap: 730, seed: 0, min_age_days: 730, reference_time: None }
    }
}

/// Automated labels: a change that is the only method modified in a bug-fix
/// commit is Buggy; methods that never appear in a bug-fix commit (and are
/// old enough) form the NotBuggy pool, sampled with `cfg.seed` up to
/// `cfg.notbuggy_cap`. Changes with a diff already seen earlier are dropped.
pub fn build_automated_goldset(
    changes: &[MethodChange],
    cfg: &GoldsetConfig,
) -> Result<Vec<LabeledChange>, GoldsetError> {
    if changes.is_empty() {
        return Err(GoldsetError::EmptyInput);
    }
    let reference = cfg.reference_time.unwrap_or_else(|| changes.iter().map(|c| c.commit.timestamp).max().unwrap_or(0));

    let mut buggy = Vec::new();
    // Per method: (ever in a bug fix, first timestamp, representative change index)
    let mut methods: BTreeMap<String, (bool, i64, usize)> = BTreeMap::new();
    for (k, c) in changes.iter().enumerate() {
        if c.commit.is_bugfix && c.methods_in_commit == 1 {
            buggy.push(LabeledChange {
                change: c.clone(),
                label: Label::Buggy,
                label_source: LabelSource::AutoSingleMethodFix,
                rater_id: None,
                note: None,
            });
        }
        let entry = methods.entry(c.method_key()).or_insert((false, c.commit.timestamp, k));
        entry.0 |= c.commit.is_bugfix;
        entry.1 = entry.1.min(c.commit.timestamp);
        // Prefer the latest modification over additions and deletions.
        let current = &changes[entry.2];
        let is_mod = c.before_source.is_some() && c.after_source.is_some();
        let cur_is_mod = current.before_source.is_some() && current.after_source.is_some();
        if is_mod || !cur_is_mod {
            entry.2 = k;
        }
    }

    let min_age = cfg.min_age_days * SECONDS_PER_DAY;
    let mut pool: Vec<usize> = methods
        .values()
        .filter(|(in_fix, first, _)| !in_fix && reference - first >= min_age)
        .map(|(_, _, idx)| *idx)
        .collect();
    pool.sort_unstable();

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let take = cfg.notbuggy_cap.min(pool.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), take).into_vec();
    picked.sort_unstable();
    let notbuggy = picked.into_iter().map(|p| LabeledChange {
        change: changes[pool[p]].clone(),
        label: Label::NotBuggy,
        label_source: LabelSource::AutoNeverInFix,
        rater_id: None,
        note: None,
    });

    Ok(dedup_by_diff(buggy.into_iter().chain(notbuggy)))
}

/// Keep the first occurrence of every distinct diff text.
pub fn dedup_by_diff(records: impl IntoIterator<Item = LabeledChange>) -> Vec<LabeledChange> {
    let mut seen = HashSet::new();
    records.into_iter().filter(|r| seen.insert(r.change.diff_text.clone())).collect()
}

/// Merge automated and human labels; a human label for a change id replaces
/// the automated one.
pub fn merge_labels(auto: Vec<LabeledChange>, human: Vec<LabeledChange>) -> Vec<LabeledChange> {
    let human_ids: HashMap<String, LabeledChange> =
        human.iter().map(|h| (h.change.change_id.clone(), h.clone())).collect();
    let mut out: Vec<LabeledChange> =
        auto.into_iter().filter(|a| !human_ids.contains_key(&a.change.change_id)).collect();
    out.extend(human);
    dedup_by_diff(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    change_id: &'a str,
    commit_id: &'a str,
    file_path: &'a str,
    signature: &'a str,
    label: Label,
    label_source: LabelSource,
    rater_id: &'a str,
    note: &'a str,
    methods_in_commit: usize,
    is_bugfix: bool,
    timestamp: i64,
    message: &'a str,
    diff: &'a str,
}

/// Write records sorted by change id and return the SHA-256 of the file.
pub fn export_dataset(records: &[LabeledChange], path: &Path, format: ExportFormat) -> Result<String, GoldsetError> {
    if records.is_empty() {
        return Err(GoldsetError::EmptyInput);
    }
    let mut sorted: Vec<&LabeledChange> = records.iter().collect();
    sorted.sort_by(|a, b| a.change.change_id.cmp(&b.change.change_id));

    let bytes = match format {
        ExportFormat::Jsonl => {
            let mut buf = Vec::new();
            for r in sorted {
                serde_json::to_writer(&mut buf, &r.to_row()).map_err(std::io::Error::other)?;
                buf.push(b'\n');
            }
            buf
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in sorted {
                w.serialize(CsvRow {
                    change_id: &r.change.change_id,
                    commit_id: &r.change.commit.commit_id,
                    file_path: &r.change.file_path,
                    signature: &r.change.method_signature,
                    label: r.label,
                    label_source: r.label_source,
                    rater_id: r.rater_id.as_deref().unwrap_or(""),
                    note: r.note.as_deref().unwrap_or(""),
                    methods_in_commit: r.change.methods_in_commit,
                    is_bugfix: r.change.commit.is_bugfix,
                    timestamp: r.change.commit.timestamp,
                    message: &r.change.commit.message,
                    diff: &r.change.diff_text,
                })
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            }
            w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?
        }
    };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(sha256_hex(&bytes))
}

pub fn read_labeled_jsonl<R: BufRead>(r: R) -> Result<Vec<LabeledChange>, GoldsetError> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: LabeledRow =
            serde_json::from_str(&line).map_err(|e| GoldsetError::Malformed { line: k + 1, reason: e.to_string() })?;
        out.push(row.into());
    }
    Ok(out)
}

//! Repository walking and method-level change extraction.
//!
//! A scan lists every commit reachable from `HEAD` (parents first, first
//! parent only for merges), flags bug-fix commits with a configurable rule
//! set and turns each commit into one [`MethodChange`] per method whose
//! normalized source differs from the parent revision.

mod diff;
mod git;
mod methods;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use diff::{compute_method_diff, count_prefixed, normalize_source};
pub use git::Repo;
pub use methods::{extract_methods, ExtractedMethod, Language, ParseError, ParserConfig};

use crate::digest::sha256_fields;
use crate::exec::Exec;

#[derive(Debug, thiserror::Error)]
pub enum MiningError {
    #[error("not a git repository: {0}")]
    RepoNotFound(PathBuf),
    #[error("corrupt or unreadable object in commit {commit}: {reason}")]
    CorruptObject { commit: String, reason: String },
    #[error("cannot parse {path}: {reason}")]
    UnparsableFile { path: String, reason: String },
    #[error("normalized sources are identical")]
    NoChange,
    #[error("invalid bug-fix rule {0:?}: {1}")]
    InvalidRule(String, String),
    #[error("{0}")]
    Git(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    pub message: String,
    pub author: String,
    pub timestamp: i64,
    pub is_bugfix: bool,
    pub files_touched: Vec<String>,
    pub first_parent: Option<String>,
}

/// Keyword and regex rules deciding whether a commit message describes a
/// bug fix. A commit is a bug fix iff any rule matches.
#[derive(Debug, Clone)]
pub struct BugfixRules {
    rules: Vec<Regex>,
}

pub const DEFAULT_BUGFIX_PATTERNS: &[&str] = &[r"(?i)\b(fix|bug|defect|fault|patch)\b", r"#\d+"];

impl Default for BugfixRules {
    fn default() -> Self {
        Self::from_patterns(DEFAULT_BUGFIX_PATTERNS).expect("default patterns compile")
    }
}

impl BugfixRules {
    pub fn from_patterns<S: AsRef<str>>(patterns: &[S]) -> Result<Self, MiningError> {
        let rules = patterns
            .iter()
            .map(|p| {
                Regex::new(p.as_ref()).map_err(|e| MiningError::InvalidRule(p.as_ref().to_string(), e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { rules })
    }

    pub fn is_bugfix(&self, message: &str) -> bool {
        self.rules.iter().any(|r| r.is_match(message))
    }
}

/// One method's before/after source within one commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodChange {
    pub change_id: String,
    pub commit: CommitRecord,
    pub file_path: String,
    pub method_signature: String,
    pub before_source: Option<String>,
    pub after_source: Option<String>,
    pub diff_text: String,
    pub methods_in_commit: usize,
}

impl MethodChange {
    /// Identity of the method across commits: file path plus signature.
    pub fn method_key(&self) -> String {
        format!("{}::{}", self.file_path, self.method_signature)
    }

    pub fn to_row(&self) -> MethodChangeRow {
        MethodChangeRow {
            change_id: self.change_id.clone(),
            commit_id: self.commit.commit_id.clone(),
            message: self.commit.message.clone(),
            timestamp: self.commit.timestamp,
            file_path: self.file_path.clone(),
            signature: self.method_signature.clone(),
            before: self.before_source.clone(),
            after: self.after_source.clone(),
            diff: self.diff_text.clone(),
            methods_in_commit: self.methods_in_commit,
            is_bugfix: self.commit.is_bugfix,
        }
    }
}

/// Flat JSONL form of a [`MethodChange`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodChangeRow {
    pub change_id: String,
    pub commit_id: String,
    pub message: String,
    pub timestamp: i64,
    pub file_path: String,
    pub signature: String,
    pub before: Option<String>,
    pub after: Option<String>,
    pub diff: String,
    pub methods_in_commit: usize,
    pub is_bugfix: bool,
}

impl From<MethodChangeRow> for MethodChange {
    fn from(row: MethodChangeRow) -> Self {
        MethodChange {
            change_id: row.change_id,
            commit: CommitRecord {
                commit_id: row.commit_id,
                message: row.message,
                author: String::new(),
                timestamp: row.timestamp,
                is_bugfix: row.is_bugfix,
                files_touched: vec![row.file_path.clone()],
                first_parent: None,
            },
            file_path: row.file_path,
            method_signature: row.signature,
            before_source: row.before,
            after_source: row.after,
            diff_text: row.diff,
            methods_in_commit: row.methods_in_commit,
        }
    }
}

pub fn change_id(commit_id: &str, file_path: &str, signature: &str) -> String {
    sha256_fields([commit_id, file_path, signature])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub commit_id: String,
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub changes: Vec<MethodChange>,
    pub skipped: Vec<SkippedFile>,
}

pub fn scan_commits(repo_path: &Path, rules: &BugfixRules) -> Result<Vec<CommitRecord>, MiningError> {
    let repo = Repo::open(repo_path)?;
    let raw = repo.log()?;
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    let empty_tree = repo.empty_tree()?;
    let mut records = Vec::with_capacity(raw.len());
    for c in raw {
        let base = c.parents.first().cloned().unwrap_or_else(|| empty_tree.clone());
        let files_touched = match repo.changed_paths(&base, &c.id) {
            Ok(paths) => paths,
            Err(e) => {
                tracing::warn!(commit = %c.id, error = %e, "skipping unreadable commit");
                continue;
            }
        };
        records.push(CommitRecord {
            is_bugfix: rules.is_bugfix(&c.message),
            commit_id: c.id,
            message: c.message,
            author: c.author,
            timestamp: c.timestamp.max(0),
            files_touched,
            first_parent: c.parents.into_iter().next(),
        });
    }
    Ok(records)
}

enum FileOutcome {
    Methods(Vec<(String, Option<String>, Option<String>, String)>),
    Skipped(SkippedFile),
}

fn methods_by_signature(src: Option<&str>, cfg: &ParserConfig) -> Result<BTreeMap<String, String>, ParseError> {
    let Some(src) = src else {
        return Ok(BTreeMap::new());
    };
    Ok(extract_methods(src, cfg)?.into_iter().map(|m| (m.signature, m.source)).collect())
}

fn extract_file(repo: &Repo, commit: &CommitRecord, path: &str, cfg: &ParserConfig) -> FileOutcome {
    let skip = |reason: String| {
        FileOutcome::Skipped(SkippedFile { commit_id: commit.commit_id.clone(), path: path.to_string(), reason })
    };
    let before = match &commit.first_parent {
        Some(parent) => match repo.read_blob(parent, path) {
            Ok(b) => b,
            Err(e) => return skip(e.to_string()),
        },
        None => None,
    };
    let after = match repo.read_blob(&commit.commit_id, path) {
        Ok(a) => a,
        Err(e) => return skip(e.to_string()),
    };
    let (old, new) = match (methods_by_signature(before.as_deref(), cfg), methods_by_signature(after.as_deref(), cfg)) {
        (Ok(o), Ok(n)) => (o, n),
        (Err(e), _) => return skip(format!("parent revision: {e}")),
        (_, Err(e)) => return skip(format!("commit revision: {e}")),
    };

    let mut signatures: Vec<&String> = old.keys().chain(new.keys()).collect();
    signatures.sort();
    signatures.dedup();
    let mut out = Vec::new();
    for sig in signatures {
        let b = old.get(sig);
        let a = new.get(sig);
        match compute_method_diff(b.map_or("", String::as_str), a.map_or("", String::as_str)) {
            Ok(diff) => out.push((sig.clone(), b.cloned(), a.cloned(), diff)),
            Err(MiningError::NoChange) => {}
            Err(e) => return skip(e.to_string()),
        }
    }
    FileOutcome::Methods(out)
}

/// Method-level changes of one commit against its first parent.
pub fn extract_method_changes(
    commit: &CommitRecord,
    repo_path: &Path,
    cfg: &ParserConfig,
    exec: Exec,
) -> Result<Extraction, MiningError> {
    let repo = Repo::open(repo_path)?;
    let paths: Vec<&String> = commit.files_touched.iter().filter(|p| cfg.accepts(p)).collect();
    let outcomes = exec.map(&paths, |p| extract_file(&repo, commit, p, cfg));

    let mut extraction = Extraction::default();
    let mut found = Vec::new();
    for (path, outcome) in paths.iter().zip(outcomes) {
        match outcome {
            FileOutcome::Methods(ms) => found.extend(ms.into_iter().map(|m| ((*path).clone(), m))),
            FileOutcome::Skipped(s) => {
                tracing::warn!(commit = %s.commit_id, path = %s.path, reason = %s.reason, "skipping file");
                extraction.skipped.push(s);
            }
        }
    }
    found.sort_by(|a, b| (&a.0, &a.1 .0).cmp(&(&b.0, &b.1 .0)));
    let count = found.len();
    extraction.changes = found
        .into_iter()
        .map(|(path, (sig, before, after, diff))| MethodChange {
            change_id: change_id(&commit.commit_id, &path, &sig),
            commit: commit.clone(),
            file_path: path,
            method_signature: sig,
            before_source: before,
            after_source: after,
            diff_text: diff,
            methods_in_commit: count,
        })
        .collect();
    Ok(extraction)
}

#[derive(Debug, Clone, Default)]
pub struct MineResult {
    pub commits: Vec<CommitRecord>,
    pub changes: Vec<MethodChange>,
    pub skipped: Vec<SkippedFile>,
}

/// Scan a repository and extract the method changes of every commit.
pub fn mine_repository(
    repo_path: &Path,
    rules: &BugfixRules,
    cfg: &ParserConfig,
    exec: Exec,
) -> Result<MineResult, MiningError> {
    let commits = scan_commits(repo_path, rules)?;
    let mut result = MineResult::default();
    for commit in &commits {
        let ex = extract_method_changes(commit, repo_path, cfg, exec)?;
        result.changes.extend(ex.changes);
        result.skipped.extend(ex.skipped);
    }
    result.commits = commits;
    Ok(result)
}

pub fn write_changes_jsonl<W: Write>(mut w: W, changes: &[MethodChange]) -> Result<(), MiningError> {
    for c in changes {
        let line = serde_json::to_string(&c.to_row()).map_err(std::io::Error::other)?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_changes_jsonl<R: BufRead>(r: R) -> Result<Vec<MethodChange>, MiningError> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MethodChangeRow =
            serde_json::from_str(&line).map_err(|e| MiningError::Malformed { line: k + 1, reason: e.to_string() })?;
        out.push(row.into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rules() {
        let rules = BugfixRules::default();
        assert!(rules
            .is_bugfix("Fixed bug 1050173 – ImmutableFieldRule no longer reports false positives for static fields."));
        assert!(!rules.is_bugfix("Add CSV export feature"));
        assert!(rules.is_bugfix("FIX: crash on start"));
        assert!(rules.is_bugfix("closes #42"));
        assert!(!rules.is_bugfix("prefix the logger"));
        assert!(!rules.is_bugfix("debugging output"));
        assert!(rules.is_bugfix("apply patch from upstream"));
    }

    #[test]
    fn custom_rules_replace_defaults() {
        let rules = BugfixRules::from_patterns(&["^JIRA-\\d+"]).unwrap();
        assert!(rules.is_bugfix("JIRA-12 tidy"));
        assert!(!rules.is_bugfix("fix it"));
        assert!(BugfixRules::from_patterns(&["("]).is_err());
    }

    #[test]
    fn change_ids_are_stable_and_distinct() {
        let a = change_id("c1", "A.java", "A.f()");
        assert_eq!(a, change_id("c1", "A.java", "A.f()"));
        assert_ne!(a, change_id("c1", "A.java", "A.g()"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn missing_repo_is_reported() {
        let err = scan_commits(Path::new("/definitely/not/here"), &BugfixRules::default()).unwrap_err();
        assert!(matches!(err, MiningError::RepoNotFound(_)));
    }

    #[test]
    fn row_round_trip() {
        let change = MethodChange {
            change_id: "id".into(),
            commit: CommitRecord {
                commit_id: "c".into(),
                message: "fix, \"quoted\"".into(),
                author: String::new(),
                timestamp: 5,
                is_bugfix: true,
                files_touched: vec!["A.java".into()],
                first_parent: None,
            },
            file_path: "A.java".into(),
            method_signature: "A.f()".into(),
            before_source: None,
            after_source: Some("void f() {}".into()),
            diff_text: "+void f() {}\n".into(),
            methods_in_commit: 1,
        };
        let mut buf = Vec::new();
        write_changes_jsonl(&mut buf, std::slice::from_ref(&change)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.ends_with('\n'));
        for key in [
            "change_id",
            "commit_id",
            "message",
            "timestamp",
            "file_path",
            "signature",
            "before",
            "after",
            "diff",
            "methods_in_commit",
            "is_bugfix",
        ] {
            assert!(text.contains(&format!("\"{key}\":")), "missing {key}");
        }
        let back = read_changes_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, vec![change]);
    }
}

//! Noisy and less-noisy method datasets, and how well code metrics
//! separate their buggy and clean sides.
//!
//! Noisy labels take every method touched by a bug-fix commit as buggy.
//! The less-noisy variant keeps a method buggy only if one of its bug-fix
//! changes is trusted (the commit changed that method alone) or was judged
//! bug-related; methods whose bug-fix changes were all judged unrelated
//! join the clean side.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::code_metrics::{CodeMetrics, METRIC_NAMES};
use crate::exec::Exec;
use crate::goldset::SECONDS_PER_DAY;
use crate::label::VerdictLabel;
use crate::mining::MethodChange;
use crate::stats::{cliffs_delta, rank_sum_test, EffectCategory, StatsError};

pub const DEFAULT_MIN_AGE_DAYS: i64 = 730;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum DenoiseError {
    #[error("no metrics for method {0}")]
    MissingMetrics(String),
    #[error("partition invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Every recorded change of one method, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodHistory {
    pub method_id: String,
    pub project: String,
    pub first_version_source: Option<String>,
    pub age_days: i64,
    pub changes: Vec<MethodChange>,
}

impl MethodHistory {
    pub fn bugfix_changes(&self) -> impl Iterator<Item = &MethodChange> {
        self.changes.iter().filter(|c| c.commit.is_bugfix)
    }
}

pub fn method_id(project: &str, change: &MethodChange) -> String {
    format!("{project}:{}", change.method_key())
}

/// Group one project's changes into histories, sorted by method id. Ages
/// are measured at `reference_time` (default: the newest change).
pub fn build_histories(project: &str, changes: &[MethodChange], reference_time: Option<i64>) -> Vec<MethodHistory> {
    let reference = reference_time.unwrap_or_else(|| changes.iter().map(|c| c.commit.timestamp).max().unwrap_or(0));
    let mut grouped: BTreeMap<String, Vec<MethodChange>> = BTreeMap::new();
    for c in changes {
        grouped.entry(method_id(project, c)).or_default().push(c.clone());
    }
    grouped
        .into_iter()
        .map(|(id, mut changes)| {
            changes.sort_by(|a, b| {
                a.commit.timestamp.cmp(&b.commit.timestamp).then_with(|| a.change_id.cmp(&b.change_id))
            });
            let first = &changes[0];
            // A history that opens with a modification still has the older
            // text on its before side.
            let first_version_source = first.before_source.clone().or_else(|| first.after_source.clone());
            let age_days = ((reference - first.commit.timestamp) / SECONDS_PER_DAY).max(0);
            MethodHistory { method_id: id, project: project.to_string(), first_version_source, age_days, changes }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub noisy_buggy: usize,
    pub noisy_notbuggy: usize,
    pub less_noisy_buggy: usize,
    pub less_noisy_notbuggy: usize,
    pub quarantined: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSet {
    pub noisy_buggy: BTreeSet<String>,
    pub noisy_notbuggy: BTreeSet<String>,
    pub less_noisy_buggy: BTreeSet<String>,
    pub less_noisy_notbuggy: BTreeSet<String>,
    /// Fixed methods kept out of both less-noisy sets because a verdict
    /// could not be parsed.
    pub quarantined: BTreeSet<String>,
    pub per_project_counts: BTreeMap<String, PartitionCounts>,
    pub project_of: BTreeMap<String, String>,
    /// Verdicts requested for multi-method bug-fix changes.
    pub verdicts_requested: usize,
}

impl PartitionSet {
    pub fn check_invariants(&self) -> Result<(), DenoiseError> {
        if !self.less_noisy_buggy.is_subset(&self.noisy_buggy) {
            return Err(DenoiseError::Invariant("less-noisy buggy is not a subset of noisy buggy".into()));
        }
        if !self.noisy_notbuggy.is_subset(&self.less_noisy_notbuggy) {
            return Err(DenoiseError::Invariant("noisy notbuggy is not a subset of less-noisy notbuggy".into()));
        }
        if let Some(id) = self.less_noisy_buggy.intersection(&self.less_noisy_notbuggy).next() {
            return Err(DenoiseError::Invariant(format!("{id} is in both less-noisy sets")));
        }
        Ok(())
    }

    /// Drop methods failing `keep` from every set and recount.
    pub fn retain(&mut self, keep: impl Fn(&str) -> bool) {
        for set in [
            &mut self.noisy_buggy,
            &mut self.noisy_notbuggy,
            &mut self.less_noisy_buggy,
            &mut self.less_noisy_notbuggy,
            &mut self.quarantined,
        ] {
            set.retain(|id| keep(id));
        }
        self.project_of.retain(|id, _| keep(id));
        self.recount();
    }

    fn recount(&mut self) {
        let mut counts: BTreeMap<String, PartitionCounts> = BTreeMap::new();
        for project in self.project_of.values() {
            counts.entry(project.clone()).or_default();
        }
        let project_of = &self.project_of;
        let mut bump = |set: &BTreeSet<String>, f: fn(&mut PartitionCounts) -> &mut usize| {
            for id in set {
                if let Some(p) = project_of.get(id) {
                    *f(counts.entry(p.clone()).or_default()) += 1;
                }
            }
        };
        bump(&self.noisy_buggy, |c| &mut c.noisy_buggy);
        bump(&self.noisy_notbuggy, |c| &mut c.noisy_notbuggy);
        bump(&self.less_noisy_buggy, |c| &mut c.less_noisy_buggy);
        bump(&self.less_noisy_notbuggy, |c| &mut c.less_noisy_notbuggy);
        bump(&self.quarantined, |c| &mut c.quarantined);
        self.per_project_counts = counts;
    }

    pub fn projects(&self) -> Vec<String> {
        self.per_project_counts.keys().cloned().collect()
    }

    fn members<'a>(&'a self, set: &'a BTreeSet<String>, project: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        set.iter().filter(move |id| self.project_of.get(*id).is_some_and(|p| p == project))
    }
}

/// Multi-method bug-fix changes that need a verdict, sorted by change id.
pub fn verdict_queries(histories: &[MethodHistory]) -> Vec<&MethodChange> {
    let mut seen = BTreeMap::new();
    for h in histories {
        for c in h.bugfix_changes().filter(|c| c.methods_in_commit > 1) {
            seen.entry(c.change_id.as_str()).or_insert(c);
        }
    }
    seen.into_values().collect()
}

/// Assemble partitions from already-collected verdicts (keyed by change
/// id). A query without a verdict counts as unparseable.
pub fn assemble_partitions(
    histories: &[MethodHistory],
    verdicts: &HashMap<String, VerdictLabel>,
    min_age_days: i64,
) -> PartitionSet {
    let mut out = PartitionSet { verdicts_requested: verdict_queries(histories).len(), ..PartitionSet::default() };
    for h in histories {
        out.project_of.insert(h.method_id.clone(), h.project.clone());
        let fixes: Vec<&MethodChange> = h.bugfix_changes().collect();
        if fixes.is_empty() {
            if h.age_days >= min_age_days {
                out.noisy_notbuggy.insert(h.method_id.clone());
                out.less_noisy_notbuggy.insert(h.method_id.clone());
            }
            continue;
        }
        out.noisy_buggy.insert(h.method_id.clone());
        let mut buggy = false;
        let mut unparseable = false;
        for c in fixes {
            let verdict = if c.methods_in_commit == 1 {
                VerdictLabel::Buggy
            } else {
                verdicts.get(&c.change_id).copied().unwrap_or(VerdictLabel::Unparseable)
            };
            match verdict {
                VerdictLabel::Buggy => buggy = true,
                VerdictLabel::Unparseable => unparseable = true,
                VerdictLabel::NotBuggy => {}
            }
        }
        if buggy {
            out.less_noisy_buggy.insert(h.method_id.clone());
        } else if unparseable {
            out.quarantined.insert(h.method_id.clone());
        } else {
            out.less_noisy_notbuggy.insert(h.method_id.clone());
        }
    }
    out.recount();
    out
}

/// Query `verdict` for every multi-method bug-fix change, then assemble
/// the partitions. Single-method fixes are trusted without a query.
pub fn build_less_noisy<F>(histories: &[MethodHistory], verdict: F, min_age_days: i64, exec: Exec) -> PartitionSet
where
    F: Fn(&MethodChange) -> VerdictLabel + Sync + Send,
{
    let queries = verdict_queries(histories);
    let labels = exec.map(&queries, |c| verdict(c));
    let verdicts: HashMap<String, VerdictLabel> =
        queries.iter().zip(labels).map(|(c, l)| (c.change_id.clone(), l)).collect();
    assemble_partitions(histories, &verdicts, min_age_days)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Noisy,
    LessNoisy,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Noisy => "noisy",
            Dataset::LessNoisy => "less_noisy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityRow {
    pub project: String,
    pub metric: String,
    pub dataset: Dataset,
    pub p_value: f64,
    pub delta: f64,
    pub category: EffectCategory,
    pub n_buggy: usize,
    pub n_notbuggy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedProject {
    pub project: String,
    pub reason: String,
}

/// Share of projects per effect category, for one metric and dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub dataset: Dataset,
    pub projects: usize,
    pub negligible_pct: f64,
    pub small_pct: f64,
    pub medium_pct: f64,
    pub large_pct: f64,
    pub significant_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub rows: Vec<SeparabilityRow>,
    pub excluded: Vec<ExcludedProject>,
}

impl SeparabilityReport {
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out = Vec::new();
        for metric in METRIC_NAMES {
            for dataset in [Dataset::Noisy, Dataset::LessNoisy] {
                let rows: Vec<&SeparabilityRow> =
                    self.rows.iter().filter(|r| r.metric == metric && r.dataset == dataset).collect();
                let n = rows.len();
                let pct = |count: usize| if n == 0 { 0.0 } else { 100.0 * count as f64 / n as f64 };
                let by = |c: EffectCategory| pct(rows.iter().filter(|r| r.category == c).count());
                out.push(AggregateRow {
                    metric: metric.to_string(),
                    dataset,
                    projects: n,
                    negligible_pct: by(EffectCategory::Negligible),
                    small_pct: by(EffectCategory::Small),
                    medium_pct: by(EffectCategory::Medium),
                    large_pct: by(EffectCategory::Large),
                    significant_pct: pct(rows.iter().filter(|r| r.p_value <= SIGNIFICANCE_LEVEL).count()),
                });
            }
        }
        out
    }

    pub fn row(&self, project: &str, metric: &str, dataset: Dataset) -> Option<&SeparabilityRow> {
        self.rows.iter().find(|r| r.project == project && r.metric == metric && r.dataset == dataset)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DenoiseError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["project", "metric", "dataset", "p_value", "delta", "category", "n_buggy", "n_notbuggy"])?;
        for r in &self.rows {
            w.write_record([
                r.project.clone(),
                r.metric.clone(),
                r.dataset.as_str().to_string(),
                r.p_value.to_string(),
                r.delta.to_string(),
                r.category.to_string(),
                r.n_buggy.to_string(),
                r.n_notbuggy.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregate_csv(&self, path: &Path) -> Result<(), DenoiseError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "metric",
            "dataset",
            "projects",
            "negligible_pct",
            "small_pct",
            "medium_pct",
            "large_pct",
            "significant_pct",
        ])?;
        for r in self.aggregate() {
            w.write_record([
                r.metric,
                r.dataset.as_str().to_string(),
                r.projects.to_string(),
                format!("{:.2}", r.negligible_pct),
                format!("{:.2}", r.small_pct),
                format!("{:.2}", r.medium_pct),
                format!("{:.2}", r.large_pct),
                format!("{:.2}", r.significant_pct),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rank-sum p and Cliff's delta (buggy vs notbuggy) per project, metric and
/// dataset. Projects missing any of the four sides are excluded and listed.
pub fn separability_report(
    partitions: &PartitionSet,
    metrics: &HashMap<String, CodeMetrics>,
) -> Result<SeparabilityReport, DenoiseError> {
    let mut report = SeparabilityReport::default();
    for project in partitions.projects() {
        let sides = [
            (Dataset::Noisy, &partitions.noisy_buggy, &partitions.noisy_notbuggy),
            (Dataset::LessNoisy, &partitions.less_noisy_buggy, &partitions.less_noisy_notbuggy),
        ];
        let mut members = Vec::new();
        let mut empty = Vec::new();
        for (dataset, buggy, clean) in sides {
            let b: Vec<&String> = partitions.members(buggy, &project).collect();
            let c: Vec<&String> = partitions.members(clean, &project).collect();
            if b.is_empty() {
                empty.push(format!("no {} buggy methods", dataset.as_str()));
            }
            if c.is_empty() {
                empty.push(format!("no {} notbuggy methods", dataset.as_str()));
            }
            members.push((dataset, b, c));
        }
        if !empty.is_empty() {
            report.excluded.push(ExcludedProject { project: project.clone(), reason: empty.join("; ") });
            continue;
        }
        for metric in METRIC_NAMES {
            for (dataset, b, c) in &members {
                let values = |ids: &[&String]| -> Result<Vec<f64>, DenoiseError> {
                    ids.iter()
                        .map(|id| {
                            metrics
                                .get(*id)
                                .and_then(|m| m.get(metric))
                                .ok_or_else(|| DenoiseError::MissingMetrics((*id).clone()))
                        })
                        .collect()
                };
                let (bv, cv) = (values(b)?, values(c)?);
                let test = rank_sum_test(&bv, &cv)?;
                let effect = cliffs_delta(&bv, &cv)?;
                report.rows.push(SeparabilityRow {
                    project: project.clone(),
                    metric: metric.to_string(),
                    dataset: *dataset,
                    p_value: test.p_two_sided,
                    delta: effect.delta,
                    category: effect.category,
                    n_buggy: bv.len(),
                    n_notbuggy: cv.len(),
                });
            }
        }
    }
    Ok(report)
}

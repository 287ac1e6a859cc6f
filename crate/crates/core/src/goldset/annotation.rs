//! Persistent store for human labels.
//!
//! Every submission is appended to `labels.jsonl` and synced before the
//! call returns; the in-memory index maps (change_id, rater_id) to the latest
//! submission. `snapshot.json` holds the compacted current state and is
//! rewritten atomically on demand. The log is the source of truth.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{cohens_kappa, GoldsetError, KappaResult, LabelSource, LabeledChange};
use crate::label::Label;
use crate::mining::MethodChange;

/// Rater id whose label settles disagreements.
pub const ADJUDICATOR: &str = "adjudicator";

const LOG_FILE: &str = "labels.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub seq: u64,
    pub change_id: String,
    pub rater_id: String,
    pub label: Label,
    pub note: String,
}

#[derive(Default)]
struct Index {
    latest: BTreeMap<(String, String), AnnotationRecord>,
    history: Vec<AnnotationRecord>,
    next_seq: u64,
}

pub struct AnnotationStore {
    dir: PathBuf,
    queue: Vec<MethodChange>,
    positions: HashMap<String, usize>,
    index: RwLock<Index>,
    log: Mutex<File>,
}

impl AnnotationStore {
    /// Open (or create) a store in `dir` for the given annotation queue,
    /// replaying any existing log.
    pub fn open(dir: &Path, queue: Vec<MethodChange>) -> Result<Self, GoldsetError> {
        fs::create_dir_all(dir)?;
        let log_path = dir.join(LOG_FILE);
        let mut index = Index::default();
        if log_path.exists() {
            for (k, line) in BufReader::new(File::open(&log_path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: AnnotationRecord = match serde_json::from_str(&line) {
                    Ok(r) => r,
                    Err(e) => {
                        // A torn final write is the only expected corruption.
                        tracing::warn!(line = k + 1, error = %e, "ignoring unreadable log line");
                        continue;
                    }
                };
                index.next_seq = index.next_seq.max(rec.seq + 1);
                index.latest.insert((rec.change_id.clone(), rec.rater_id.clone()), rec.clone());
                index.history.push(rec);
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        let positions = queue.iter().enumerate().map(|(k, c)| (c.change_id.clone(), k)).collect();
        Ok(Self { dir: dir.to_path_buf(), queue, positions, index: RwLock::new(index), log: Mutex::new(log) })
    }

    pub fn queue(&self) -> &[MethodChange] {
        &self.queue
    }

    pub fn change(&self, change_id: &str) -> Option<&MethodChange> {
        self.positions.get(change_id).map(|k| &self.queue[*k])
    }

    /// Store a label; a repeated (change_id, rater_id) overwrites the
    /// current label while the log keeps the earlier one.
    pub fn record_annotation(
        &self,
        change_id: &str,
        rater_id: &str,
        label: &str,
        note: &str,
    ) -> Result<LabeledChange, GoldsetError> {
        let change = self.change(change_id).ok_or_else(|| GoldsetError::UnknownChange(change_id.to_string()))?;
        let label: Label = label.parse()?;
        if rater_id.trim().is_empty() {
            return Err(GoldsetError::InvalidRater);
        }

        let mut index = self.index.write().expect("index lock poisoned");
        let rec = AnnotationRecord {
            seq: index.next_seq,
            change_id: change_id.to_string(),
            rater_id: rater_id.to_string(),
            label,
            note: note.to_string(),
        };
        {
            let mut log = self.log.lock().expect("log lock poisoned");
            let mut line = serde_json::to_vec(&rec).map_err(std::io::Error::other)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.sync_data()?;
        }
        index.next_seq += 1;
        index.latest.insert((rec.change_id.clone(), rec.rater_id.clone()), rec.clone());
        index.history.push(rec);

        Ok(LabeledChange {
            change: change.clone(),
            label,
            label_source: LabelSource::HumanRater,
            rater_id: Some(rater_id.to_string()),
            note: (!note.is_empty()).then(|| note.to_string()),
        })
    }

    /// Queue items the rater has not labeled yet, in queue order.
    pub fn pending(&self, rater_id: &str, limit: usize) -> Vec<MethodChange> {
        let index = self.index.read().expect("index lock poisoned");
        self.queue
            .iter()
            .filter(|c| !index.latest.contains_key(&(c.change_id.clone(), rater_id.to_string())))
            .take(limit)
            .cloned()
            .collect()
    }

    /// Current label per change for one rater.
    pub fn labels_of(&self, rater_id: &str) -> BTreeMap<String, Label> {
        let index = self.index.read().expect("index lock poisoned");
        index.latest.values().filter(|r| r.rater_id == rater_id).map(|r| (r.change_id.clone(), r.label)).collect()
    }

    pub fn current(&self) -> Vec<AnnotationRecord> {
        self.index.read().expect("index lock poisoned").latest.values().cloned().collect()
    }

    pub fn history(&self) -> Vec<AnnotationRecord> {
        self.index.read().expect("index lock poisoned").history.clone()
    }

    /// Kappa over the changes both raters labeled, ordered by change id.
    pub fn kappa(&self, rater_a: &str, rater_b: &str) -> Result<KappaResult, GoldsetError> {
        let a = self.labels_of(rater_a);
        let b = self.labels_of(rater_b);
        let (ra, rb): (Vec<Label>, Vec<Label>) = a.iter().filter_map(|(id, la)| b.get(id).map(|lb| (*la, *lb))).unzip();
        cohens_kappa(&ra, &rb)
    }

    /// One label per change: the adjudicator's when present, otherwise the
    /// raters' label when they all agree. Unresolved disagreements are left
    /// out.
    pub fn resolved_labels(&self) -> Vec<LabeledChange> {
        let index = self.index.read().expect("index lock poisoned");
        let mut by_change: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for rec in index.latest.values() {
            by_change.entry(rec.change_id.as_str()).or_default().push(rec);
        }
        let mut out = Vec::new();
        for (id, recs) in by_change {
            let Some(change) = self.change(id) else { continue };
            let chosen = match recs.iter().find(|r| r.rater_id == ADJUDICATOR) {
                Some(r) => Some(*r),
                None if recs.iter().all(|r| r.label == recs[0].label) => Some(recs[0]),
                None => None,
            };
            if let Some(r) = chosen {
                out.push(LabeledChange {
                    change: change.clone(),
                    label: r.label,
                    label_source: LabelSource::HumanRater,
                    rater_id: Some(r.rater_id.clone()),
                    note: (!r.note.is_empty()).then(|| r.note.clone()),
                });
            }
        }
        out
    }

    /// Rewrite `snapshot.json` with the current labels (write + rename).
    pub fn snapshot(&self) -> Result<PathBuf, GoldsetError> {
        let current = self.current();
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let dest = self.dir.join(SNAPSHOT_FILE);
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer_pretty(&mut f, &current).map_err(std::io::Error::other)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &dest)?;
        Ok(dest)
    }
}

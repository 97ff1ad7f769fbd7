//! Historical memory: append-only, queryable, persisted as one JSON object
//! per line. Recovery tolerates a truncated final line.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Knowledge,
    Decision,
    Candidate,
    Evaluation,
    Report,
    ToolLog,
}

/// Immutable once appended. Field order here is the on-disk field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: String,
    pub iteration: u32,
    pub kind: EntryKind,
    pub tags: BTreeSet<String>,
    pub payload: Value,
    pub created_at: DateTime<Utc>,
}

/// Entry content before the store assigns id and timestamp.
#[derive(Debug, Clone)]
pub struct EntryDraft {
    pub iteration: u32,
    pub kind: EntryKind,
    pub tags: BTreeSet<String>,
    pub payload: Value,
}

impl EntryDraft {
    pub fn new(iteration: u32, kind: EntryKind, payload: Value) -> Self {
        Self { iteration, kind, tags: BTreeSet::new(), payload }
    }

    pub fn with_tags<S: Into<String>>(mut self, tags: impl IntoIterator<Item = S>) -> Self {
        self.tags = tags.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct MemoryFilter {
    pub kind: Option<EntryKind>,
    pub tags_any: Option<BTreeSet<String>>,
    /// Inclusive iteration range.
    pub iteration_range: Option<(u32, u32)>,
}

impl MemoryFilter {
    pub fn kind(kind: EntryKind) -> Self {
        Self { kind: Some(kind), ..Default::default() }
    }

    pub fn matches(&self, entry: &MemoryEntry) -> bool {
        if let Some(kind) = self.kind {
            if entry.kind != kind {
                return false;
            }
        }
        if let Some(tags) = &self.tags_any {
            if !tags.iter().any(|t| entry.tags.contains(t)) {
                return false;
            }
        }
        if let Some((lo, hi)) = self.iteration_range {
            if entry.iteration < lo || entry.iteration > hi {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate entry id `{0}`")]
    DuplicateId(String),
    #[error("iteration regression: {attempted} after {current}")]
    IterationRegression { attempted: u32, current: u32 },
    #[error("corrupt memory log at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct RecoveryReport {
    pub recovered: usize,
    /// True when a truncated trailing line was dropped.
    pub dropped_partial: bool,
}

struct StoreInner {
    writer: BufWriter<File>,
    entries: Vec<MemoryEntry>,
    ids: BTreeSet<String>,
    last_iteration: u32,
    counter: u64,
}

/// Append-only store. Appends are serialized through the write lock; readers
/// see only fully appended entries.
pub struct MemoryStore {
    path: PathBuf,
    inner: RwLock<StoreInner>,
}

fn normalize_tags(tags: &BTreeSet<String>) -> BTreeSet<String> {
    tags.iter().map(|t| t.trim().to_lowercase()).filter(|t| !t.is_empty()).collect()
}

impl MemoryStore {
    /// Creates a fresh store, truncating any existing file at `path`.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(&path)?;
        Ok(Self {
            path,
            inner: RwLock::new(StoreInner {
                writer: BufWriter::new(file),
                entries: Vec::new(),
                ids: BTreeSet::new(),
                last_iteration: 0,
                counter: 0,
            }),
        })
    }

    /// Opens an existing store (or creates an empty one), recovering every
    /// complete entry. A truncated or unparseable final line is dropped with
    /// a warning; corruption anywhere else is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, RecoveryReport), MemoryError> {
        let path = path.as_ref().to_path_buf();
        let mut report = RecoveryReport::default();
        let mut entries: Vec<MemoryEntry> = Vec::new();

        if path.exists() {
            let file = File::open(&path)?;
            let mut lines: Vec<String> = Vec::new();
            for line in BufReader::new(file).lines() {
                lines.push(line?);
            }
            let count = lines.len();
            for (idx, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<MemoryEntry>(&line) {
                    Ok(entry) => entries.push(entry),
                    Err(e) if idx + 1 == count => {
                        log::warn!("dropping truncated final memory line: {e}");
                        report.dropped_partial = true;
                    }
                    Err(e) => {
                        return Err(MemoryError::Corrupt { line: idx + 1, reason: e.to_string() })
                    }
                }
            }
            // Rewrite only when a partial line was dropped, so the file again
            // ends on a complete entry.
            if report.dropped_partial {
                let mut tmp = BufWriter::new(File::create(&path)?);
                for entry in &entries {
                    serde_json::to_writer(&mut tmp, entry).map_err(|e| MemoryError::Corrupt {
                        line: 0,
                        reason: e.to_string(),
                    })?;
                    tmp.write_all(b"\n")?;
                }
                tmp.flush()?;
            }
        }

        report.recovered = entries.len();
        let ids: BTreeSet<String> = entries.iter().map(|e| e.id.clone()).collect();
        let last_iteration = entries.iter().map(|e| e.iteration).max().unwrap_or(0);
        let counter = entries
            .iter()
            .filter_map(|e| e.id.strip_prefix("m-").and_then(|n| n.parse::<u64>().ok()))
            .max()
            .unwrap_or(0);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((
            Self {
                path,
                inner: RwLock::new(StoreInner {
                    writer: BufWriter::new(file),
                    entries,
                    ids,
                    last_iteration,
                    counter,
                }),
            },
            report,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends a draft; the store assigns `m-NNNNNN` ids. The entry is
    /// flushed to the log file before this returns.
    pub fn append(&self, draft: EntryDraft) -> Result<String, MemoryError> {
        let mut inner = self.inner.write().expect("memory lock");
        if draft.iteration < inner.last_iteration {
            return Err(MemoryError::IterationRegression {
                attempted: draft.iteration,
                current: inner.last_iteration,
            });
        }
        inner.counter += 1;
        let entry = MemoryEntry {
            id: format!("m-{:06}", inner.counter),
            iteration: draft.iteration,
            kind: draft.kind,
            tags: normalize_tags(&draft.tags),
            payload: draft.payload,
            created_at: Utc::now(),
        };
        Self::write_entry(&mut inner, entry.clone())?;
        Ok(entry.id)
    }

    /// Appends a caller-identified entry (replay and import paths).
    pub fn append_entry(&self, entry: MemoryEntry) -> Result<String, MemoryError> {
        let mut inner = self.inner.write().expect("memory lock");
        if inner.ids.contains(&entry.id) {
            return Err(MemoryError::DuplicateId(entry.id));
        }
        if entry.iteration < inner.last_iteration {
            return Err(MemoryError::IterationRegression {
                attempted: entry.iteration,
                current: inner.last_iteration,
            });
        }
        let mut entry = entry;
        entry.tags = normalize_tags(&entry.tags);
        Self::write_entry(&mut inner, entry.clone())?;
        Ok(entry.id)
    }

    fn write_entry(inner: &mut StoreInner, entry: MemoryEntry) -> Result<(), MemoryError> {
        let line = serde_json::to_string(&entry).expect("memory entries serialize");
        inner.writer.write_all(line.as_bytes())?;
        inner.writer.write_all(b"\n")?;
        inner.writer.flush()?;
        inner.last_iteration = entry.iteration;
        inner.ids.insert(entry.id.clone());
        inner.entries.push(entry);
        Ok(())
    }

    /// Matching entries in append order.
    pub fn query(&self, filter: &MemoryFilter) -> Vec<MemoryEntry> {
        let inner = self.inner.read().expect("memory lock");
        inner.entries.iter().filter(|e| filter.matches(e)).cloned().collect()
    }

    /// Count of entries with the given kind whose tags intersect `tags`.
    pub fn coverage(&self, kind: EntryKind, tags: &BTreeSet<String>) -> usize {
        let tags = normalize_tags(tags);
        let inner = self.inner.read().expect("memory lock");
        inner
            .entries
            .iter()
            .filter(|e| e.kind == kind && tags.iter().any(|t| e.tags.contains(t)))
            .count()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("memory lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last_iteration(&self) -> u32 {
        self.inner.read().expect("memory lock").last_iteration
    }
}

/// Reads a memory log without opening it for writing (replay path).
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<MemoryEntry>, MemoryError> {
    let file = File::open(path.as_ref())?;
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| MemoryError::Corrupt { line: idx + 1, reason: e.to_string() })?;
        entries.push(entry);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn draft(iteration: u32, kind: EntryKind, tags: &[&str]) -> EntryDraft {
        EntryDraft::new(iteration, kind, json!({"n": iteration})).with_tags(tags.to_vec())
    }

    #[test]
    fn first_id_is_m_000001() {
        let dir = tempfile::tempdir().unwrap();
        let store = MemoryStore::create(dir.path().join("mem.jsonl")).unwrap();
        let id = store.append(draft(0, EntryKind::Knowledge, &["Sn-Pb"])).unwrap();
        assert_eq!(id, "m-000001");
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn iteration_regression_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = MemoryStore::create(dir.path().join("mem.jsonl")).unwrap();
        store.append(draft(3, EntryKind::Decision, &[])).unwrap();
        let err = store.append(draft(2, EntryKind::Decision, &[])).unwrap_err();
        assert!(matches!(err, MemoryError::IterationRegression { attempted: 2, current: 3 }));
    }

    #[test]
    fn reopen_preserves_order_and_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let store = MemoryStore::create(&path).unwrap();
        for i in 0..100 {
            store.append(draft(i / 10, EntryKind::Knowledge, &["a"])).unwrap();
        }
        let before = store.query(&MemoryFilter::default());
        drop(store);

        let (reopened, report) = MemoryStore::open(&path).unwrap();
        assert_eq!(report.recovered, 100);
        assert!(!report.dropped_partial);
        let after = reopened.query(&MemoryFilter::default());
        assert_eq!(before, after);
        // Appends continue without id collisions.
        let id = reopened.append(draft(9, EntryKind::Decision, &[])).unwrap();
        assert_eq!(id, "m-000101");
    }

    #[test]
    fn truncated_final_line_is_dropped_with_all_others_kept() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let store = MemoryStore::create(&path).unwrap();
        for i in 0..5 {
            store.append(draft(i, EntryKind::Knowledge, &[])).unwrap();
        }
        drop(store);
        // Simulate a crash mid-append.
        let mut contents = std::fs::read_to_string(&path).unwrap();
        contents.push_str("{\"id\":\"m-0000");
        std::fs::write(&path, contents).unwrap();

        let (reopened, report) = MemoryStore::open(&path).unwrap();
        assert_eq!(report.recovered, 5);
        assert!(report.dropped_partial);
        assert_eq!(reopened.len(), 5);
    }

    #[test]
    fn corruption_in_the_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let store = MemoryStore::create(&path).unwrap();
        store.append(draft(0, EntryKind::Knowledge, &[])).unwrap();
        store.append(draft(0, EntryKind::Knowledge, &[])).unwrap();
        drop(store);
        let contents = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = contents.lines().collect();
        lines[0] = "{broken";
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(MemoryStore::open(&path), Err(MemoryError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn query_filters_compose() {
        let dir = tempfile::tempdir().unwrap();
        let store = MemoryStore::create(dir.path().join("mem.jsonl")).unwrap();
        store.append(draft(0, EntryKind::Knowledge, &["Sn-Pb"])).unwrap();
        store.append(draft(0, EntryKind::Decision, &["Sn-Pb"])).unwrap();
        store.append(draft(1, EntryKind::Knowledge, &["lead-free"])).unwrap();
        store.append(draft(1, EntryKind::Knowledge, &["sn-pb"])).unwrap();
        store.append(draft(2, EntryKind::Report, &[])).unwrap();

        assert_eq!(store.query(&MemoryFilter::default()).len(), 5);

        let filter = MemoryFilter {
            kind: Some(EntryKind::Knowledge),
            tags_any: Some(["sn-pb".to_string()].into()),
            iteration_range: None,
        };
        let hits = store.query(&filter);
        assert_eq!(hits.len(), 2, "tags are lowercased on append");
        assert!(hits[0].id < hits[1].id, "append order is preserved");

        let only_iter_1 = MemoryFilter {
            kind: None,
            tags_any: None,
            iteration_range: Some((1, 1)),
        };
        assert_eq!(store.query(&only_iter_1).len(), 2);
    }

    #[test]
    fn coverage_counts_kind_and_tag_intersection() {
        let dir = tempfile::tempdir().unwrap();
        let store = MemoryStore::create(dir.path().join("mem.jsonl")).unwrap();
        assert_eq!(store.coverage(EntryKind::Knowledge, &["sn-pb".to_string()].into()), 0);
        for _ in 0..25 {
            store.append(draft(0, EntryKind::Knowledge, &["Sn-Pb"])).unwrap();
        }
        assert_eq!(store.coverage(EntryKind::Knowledge, &["sn-pb".to_string()].into()), 25);
        assert_eq!(store.coverage(EntryKind::Knowledge, &["lead-free".to_string()].into()), 0);
    }

    #[test]
    fn duplicate_explicit_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = MemoryStore::create(dir.path().join("mem.jsonl")).unwrap();
        let entry = MemoryEntry {
            id: "ext-1".into(),
            iteration: 0,
            kind: EntryKind::Knowledge,
            tags: BTreeSet::new(),
            payload: json!({}),
            created_at: Utc::now(),
        };
        store.append_entry(entry.clone()).unwrap();
        assert!(matches!(store.append_entry(entry), Err(MemoryError::DuplicateId(_))));
    }
}

//! Document-oriented persistence of cycle records.
//!
//! A single append-only file holds one revision-stamped record per line.
//! The latest revision per cycle is the current document; the full history
//! stays readable until [`CycleStore::compact`] rewrites the file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycle::{CycleError, CycleRecord, CycleStatus, DatasetRow};
use crate::dataset::RejectedLine;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error("revision conflict on cycle {cycle_id:?}: expected base {expected}, store is at {actual}")]
    RevisionConflict { cycle_id: String, expected: u64, actual: u64 },
    #[error("store file {file} corrupt at line {line}: {reason}")]
    Corrupt { file: String, line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One line of the store file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRevision {
    pub revision: u64,
    pub record: CycleRecord,
}

/// Query filter; all present fields must match. Time bounds are inclusive
/// and apply to the record's first timestamp.
#[derive(Debug, Clone, Default)]
pub struct RecordFilter {
    pub status: Option<CycleStatus>,
    pub source: Option<String>,
    pub from_ms: Option<u64>,
    pub to_ms: Option<u64>,
}

impl RecordFilter {
    pub fn status(status: CycleStatus) -> Self {
        Self { status: Some(status), ..Self::default() }
    }

    pub fn source(source: &str) -> Self {
        Self { source: Some(source.to_string()), ..Self::default() }
    }

    fn matches(&self, record: &CycleRecord) -> bool {
        if let Some(s) = self.status {
            if record.status != s {
                return false;
            }
        }
        if let Some(src) = &self.source {
            if &record.source != src {
                return false;
            }
        }
        let ts = record.first_timestamp();
        if let Some(from) = self.from_ms {
            if ts < from {
                return false;
            }
        }
        if let Some(to) = self.to_ms {
            if ts > to {
                return false;
            }
        }
        true
    }
}

/// Summary of a (possibly partial) import.
#[derive(Debug)]
pub struct ImportReport {
    pub imported: usize,
    pub rejects: Vec<RejectedLine>,
}

pub struct CycleStore {
    path: Option<PathBuf>,
    file: Mutex<Option<File>>,
    histories: RwLock<HashMap<String, Vec<StoredRevision>>>,
}

impl CycleStore {
    /// Volatile store for tests and dry runs.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: Mutex::new(None),
            histories: RwLock::new(HashMap::new()),
        }
    }

    /// Open (or create) a store file, replaying its history.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let mut histories: HashMap<String, Vec<StoredRevision>> = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: StoredRevision =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        file: path.display().to_string(),
                        line: i + 1,
                        reason: e.to_string(),
                    })?;
                histories.entry(entry.record.cycle_id.clone()).or_default().push(entry);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            file: Mutex::new(Some(file)),
            histories: RwLock::new(histories),
        })
    }

    /// Insert a new cycle or update an existing one with a legal status
    /// transition. Returns the new revision (dense from 1 per cycle).
    pub fn append(&self, record: CycleRecord) -> Result<u64, StoreError> {
        self.append_inner(record, None)
    }

    /// Optimistic append: fails unless the store's latest revision equals
    /// `based_on`.
    pub fn append_versioned(&self, record: CycleRecord, based_on: u64) -> Result<u64, StoreError> {
        self.append_inner(record, Some(based_on))
    }

    fn append_inner(&self, record: CycleRecord, based_on: Option<u64>) -> Result<u64, StoreError> {
        record.validate()?;
        let mut histories = self.histories.write().expect("store poisoned");
        let history = histories.entry(record.cycle_id.clone()).or_default();
        let current = history.last();
        if let Some(base) = based_on {
            let actual = current.map_or(0, |r| r.revision);
            if base != actual {
                return Err(StoreError::RevisionConflict {
                    cycle_id: record.cycle_id.clone(),
                    expected: base,
                    actual,
                });
            }
        }
        if let Some(last) = current {
            if !last.record.status.can_transition_to(record.status) {
                return Err(StoreError::Cycle(CycleError::IllegalTransition {
                    cycle_id: record.cycle_id.clone(),
                    from: last.record.status,
                    to: record.status,
                }));
            }
        }
        let revision = current.map_or(0, |r| r.revision) + 1;
        let entry = StoredRevision { revision, record };
        self.persist_line(&entry)?;
        history.push(entry);
        Ok(revision)
    }

    fn persist_line(&self, entry: &StoredRevision) -> Result<(), StoreError> {
        let mut guard = self.file.lock().expect("store file poisoned");
        if let Some(file) = guard.as_mut() {
            let mut line = serde_json::to_string(entry).expect("record serializes");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        Ok(())
    }

    /// Latest revision of a cycle.
    pub fn get(&self, cycle_id: &str) -> Option<CycleRecord> {
        self.histories
            .read()
            .expect("store poisoned")
            .get(cycle_id)
            .and_then(|h| h.last())
            .map(|r| r.record.clone())
    }

    /// Full revision history of a cycle, oldest first.
    pub fn history(&self, cycle_id: &str) -> Vec<StoredRevision> {
        self.histories
            .read()
            .expect("store poisoned")
            .get(cycle_id)
            .cloned()
            .unwrap_or_default()
    }

    /// Latest revisions matching the filter, ordered by first timestamp
    /// (ties by cycle id).
    pub fn query(&self, filter: &RecordFilter) -> Vec<CycleRecord> {
        let histories = self.histories.read().expect("store poisoned");
        let mut out: Vec<CycleRecord> = histories
            .values()
            .filter_map(|h| h.last())
            .map(|r| r.record.clone())
            .filter(|r| filter.matches(r))
            .collect();
        out.sort_by(|a, b| {
            a.first_timestamp()
                .cmp(&b.first_timestamp())
                .then_with(|| a.cycle_id.cmp(&b.cycle_id))
        });
        out
    }

    pub fn len(&self) -> usize {
        self.histories.read().expect("store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write matching records as dataset rows (records without setpoints or
    /// outcome have no row and are skipped).
    pub fn export(&self, filter: &RecordFilter) -> String {
        let mut out = String::new();
        for record in self.query(filter) {
            if let Some(row) = DatasetRow::from_record(&record) {
                out.push_str(&serde_json::to_string(&row).expect("row serializes"));
                out.push('\n');
            }
        }
        out
    }

    /// Import dataset rows as completed records. Invalid lines are reported
    /// with their line number; valid lines still import.
    pub fn import(&self, reader: impl BufRead, now_ms: u64) -> Result<ImportReport, StoreError> {
        let (rows, mut rejects) = crate::dataset::parse_rows(reader).map_err(|e| {
            StoreError::Io(std::io::Error::other(e.to_string()))
        })?;
        let mut line_of: HashMap<String, usize> = HashMap::new();
        let mut imported = 0;
        // recover source line numbers for reject reporting
        let mut line_no = 0;
        for row in rows {
            line_no += 1;
            while rejects.iter().any(|r| r.line == line_no) {
                line_no += 1;
            }
            line_of.insert(row.cycle_id.clone(), line_no);
            let record = row.into_record(now_ms);
            match self.append(record) {
                Ok(_) => imported += 1,
                Err(e) => rejects.push(RejectedLine { line: line_no, reason: e.to_string() }),
            }
        }
        rejects.sort_by_key(|r| r.line);
        Ok(ImportReport { imported, rejects })
    }

    /// Rewrite the store file keeping only the latest revision per cycle.
    /// Revision counters are preserved.
    pub fn compact(&self) -> Result<(), StoreError> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut histories = self.histories.write().expect("store poisoned");
        let mut guard = self.file.lock().expect("store file poisoned");
        let tmp = path.with_extension("compacting");
        {
            let mut out = File::create(&tmp)?;
            let mut latest: Vec<&StoredRevision> =
                histories.values().filter_map(|h| h.last()).collect();
            latest.sort_by(|a, b| a.record.cycle_id.cmp(&b.record.cycle_id));
            for entry in latest {
                let mut line = serde_json::to_string(entry).expect("record serializes");
                line.push('\n');
                out.write_all(line.as_bytes())?;
            }
            out.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        *guard = Some(OpenOptions::new().append(true).open(path)?);
        for history in histories.values_mut() {
            if history.len() > 1 {
                let last = history.pop().expect("non-empty");
                history.clear();
                history.push(last);
            }
        }
        Ok(())
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

//! Human review decisions keyed by finding fingerprint.
//!
//! The store is an append-only JSON-lines file: one record per line, the
//! latest record for a fingerprint wins. Writers take an exclusive
//! advisory lock on the file for the duration of an append.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::engine::{Finding, ScanResult};

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TriageState {
    #[default]
    Unreviewed,
    Confirmed,
    FalsePositive,
    AcceptedRisk,
    Remediated,
}

impl TriageState {
    pub const ALL: [TriageState; 5] = [
        TriageState::Unreviewed,
        TriageState::Confirmed,
        TriageState::FalsePositive,
        TriageState::AcceptedRisk,
        TriageState::Remediated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TriageState::Unreviewed => "unreviewed",
            TriageState::Confirmed => "confirmed",
            TriageState::FalsePositive => "false_positive",
            TriageState::AcceptedRisk => "accepted_risk",
            TriageState::Remediated => "remediated",
        }
    }

    /// Suppressed findings leave working views and CI gates.
    pub fn suppresses(self) -> bool {
        matches!(self, TriageState::FalsePositive | TriageState::AcceptedRisk)
    }
}

impl fmt::Display for TriageState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TriageState {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TriageState::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| TriageError::UnknownState(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageRecord {
    pub fingerprint: String,
    pub state: TriageState,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub annotator: String,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum TriageError {
    #[error("unknown triage state `{0}` (expected unreviewed, confirmed, false_positive, accepted_risk or remediated)")]
    UnknownState(String),
    #[error("leaving `remediated` requires a note")]
    NoteRequired,
    #[error("triage store {0} is locked by another writer")]
    Locked(String),
    #[error("triage store {path} line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("triage store I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct TriageStore {
    path: Option<PathBuf>,
    log: Vec<TriageRecord>,
    current: BTreeMap<String, TriageRecord>,
}

impl TriageStore {
    /// Store not backed by a file.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the store at `path`. A missing file is an empty store; the
    /// file is created by the first write.
    pub fn open(path: &Path) -> Result<Self, TriageError> {
        let log = read_log(path)?;
        Ok(TriageStore {
            path: Some(path.to_path_buf()),
            current: replay(&log),
            log,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Re-reads the file, picking up appends from other writers.
    pub fn reload(&mut self) -> Result<(), TriageError> {
        if let Some(path) = &self.path {
            self.log = read_log(path)?;
            self.current = replay(&self.log);
        }
        Ok(())
    }

    pub fn get(&self, fingerprint: &str) -> Option<&TriageRecord> {
        self.current.get(fingerprint)
    }

    pub fn state_of(&self, fingerprint: &str) -> TriageState {
        self.get(fingerprint).map(|r| r.state).unwrap_or_default()
    }

    /// Current record per fingerprint, ordered by fingerprint.
    pub fn records(&self) -> impl Iterator<Item = &TriageRecord> {
        self.current.values()
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    /// Every record ever written, oldest first.
    pub fn log(&self) -> &[TriageRecord] {
        &self.log
    }

    pub fn history(&self, fingerprint: &str) -> Vec<&TriageRecord> {
        self.log
            .iter()
            .filter(|r| r.fingerprint == fingerprint)
            .collect()
    }

    /// Records a new state for `fingerprint`.
    ///
    /// Unknown fingerprints are accepted so suppressions can be seeded
    /// before a finding first appears; callers that know the current scan
    /// can warn via [`TriageStore::is_known`].
    pub fn set_state(
        &mut self,
        fingerprint: &str,
        state: TriageState,
        note: &str,
        annotator: &str,
    ) -> Result<TriageRecord, TriageError> {
        let record = TriageRecord {
            fingerprint: fingerprint.to_string(),
            state,
            note: note.to_string(),
            annotator: annotator.to_string(),
            updated_at: Utc::now(),
        };
        match self.path.clone() {
            None => {
                check_transition(self.get(fingerprint), &record)?;
            }
            Some(path) => {
                let shown = path.display().to_string();
                let io_err = |source| TriageError::Io {
                    path: shown.clone(),
                    source,
                };
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).map_err(io_err)?;
                }
                let mut file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(io_err)?;
                lock(&file, &shown)?;
                let outcome = (|| {
                    // another writer may have appended since we last read
                    self.reload()?;
                    check_transition(self.get(fingerprint), &record)?;
                    let mut line = serde_json::to_string(&record).expect("record serializes");
                    line.push('\n');
                    file.write_all(line.as_bytes()).map_err(io_err)?;
                    file.sync_data().map_err(io_err)
                })();
                let _ = file.unlock();
                outcome?;
            }
        }
        self.log.push(record.clone());
        self.current.insert(fingerprint.to_string(), record.clone());
        Ok(record)
    }

    pub fn is_known(fingerprint: &str, result: &ScanResult) -> bool {
        result.findings.iter().any(|f| f.fingerprint == fingerprint)
    }
}

fn lock(file: &File, shown: &str) -> Result<(), TriageError> {
    match file.try_lock() {
        Ok(()) => Ok(()),
        Err(std::fs::TryLockError::WouldBlock) => Err(TriageError::Locked(shown.to_string())),
        Err(std::fs::TryLockError::Error(source)) => Err(TriageError::Io {
            path: shown.to_string(),
            source,
        }),
    }
}

fn check_transition(
    previous: Option<&TriageRecord>,
    next: &TriageRecord,
) -> Result<(), TriageError> {
    let leaving_remediated = previous.is_some_and(|p| p.state == TriageState::Remediated)
        && next.state != TriageState::Remediated;
    if leaving_remediated && next.note.trim().is_empty() {
        return Err(TriageError::NoteRequired);
    }
    Ok(())
}

/// Latest record per fingerprint.
pub fn replay(log: &[TriageRecord]) -> BTreeMap<String, TriageRecord> {
    let mut current = BTreeMap::new();
    for r in log {
        current.insert(r.fingerprint.clone(), r.clone());
    }
    current
}

fn read_log(path: &Path) -> Result<Vec<TriageRecord>, TriageError> {
    let shown = path.display().to_string();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(TriageError::Io {
                path: shown,
                source,
            })
        }
    };
    // a final line without its newline is an append still in progress
    let complete = match text.rfind('\n') {
        Some(idx) => &text[..=idx],
        None => "",
    };
    let mut log = Vec::new();
    for (idx, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| TriageError::Corrupt {
            path: shown.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        log.push(record);
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub finding: Finding,
    pub state: TriageState,
    pub note: String,
    pub suppressed: bool,
}

/// Scan findings with triage state merged in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingView {
    /// All findings, suppressed included, in scan order.
    pub entries: Vec<ViewEntry>,
    pub total: usize,
    pub suppressed: usize,
    pub open: usize,
}

impl WorkingView {
    pub fn open_entries(&self) -> impl Iterator<Item = &ViewEntry> {
        self.entries.iter().filter(|e| !e.suppressed)
    }

    pub fn open_findings(&self) -> impl Iterator<Item = &Finding> {
        self.open_entries().map(|e| &e.finding)
    }
}

pub fn apply_triage(result: &ScanResult, store: &TriageStore) -> WorkingView {
    let entries: Vec<ViewEntry> = result
        .findings
        .iter()
        .map(|f| {
            let record = store.get(&f.fingerprint);
            let state = record.map(|r| r.state).unwrap_or_default();
            ViewEntry {
                finding: f.clone(),
                state,
                note: record.map(|r| r.note.clone()).unwrap_or_default(),
                suppressed: state.suppresses(),
            }
        })
        .collect();
    let suppressed = entries.iter().filter(|e| e.suppressed).count();
    WorkingView {
        total: entries.len(),
        open: entries.len() - suppressed,
        suppressed,
        entries,
    }
}

/// Fingerprints in the store that no finding of `result` carries.
pub fn unknown_fingerprints<'a>(store: &'a TriageStore, result: &ScanResult) -> Vec<&'a str> {
    let known: HashSet<&str> = result
        .findings
        .iter()
        .map(|f| f.fingerprint.as_str())
        .collect();
    store
        .records()
        .map(|r| r.fingerprint.as_str())
        .filter(|fp| !known.contains(fp))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BacklogFormat {
    Csv,
    Json,
}

impl FromStr for BacklogFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(BacklogFormat::Csv),
            "json" => Ok(BacklogFormat::Json),
            _ => Err(format!(
                "unknown backlog format `{s}` (expected csv or json)"
            )),
        }
    }
}

/// Rows ordered by severity, path, line. `full` keeps suppressed rows.
pub fn backlog_rows(view: &WorkingView, full: bool) -> Vec<&ViewEntry> {
    let mut rows: Vec<&ViewEntry> = view
        .entries
        .iter()
        .filter(|e| full || !e.suppressed)
        .collect();
    rows.sort_by(|a, b| a.finding.sort_key().cmp(&b.finding.sort_key()));
    rows
}

pub fn export_backlog(view: &WorkingView, format: BacklogFormat, full: bool) -> String {
    let rows = backlog_rows(view, full);
    match format {
        BacklogFormat::Csv => crate::report::render_csv(rows.iter().copied()),
        BacklogFormat::Json => crate::report::render_backlog_json(view, &rows),
    }
}

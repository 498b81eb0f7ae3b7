//! Saved scan results and rescan comparison.
//!
//! A baseline file is one JSON header line followed by the structured scan
//! result. The header carries a SHA-256 of the payload bytes, so truncation
//! or editing is detected on load.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::sha256_hex;
use crate::engine::{Finding, ScanResult};
use crate::report::{parse_structured, render_structured};
use crate::severity::Severity;

pub const BASELINE_FORMAT: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("baseline I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("baseline {0} already exists; baselines are never overwritten")]
    Exists(String),
    #[error("baseline {0} has no valid header")]
    BadHeader(String),
    #[error("baseline {path} failed checksum verification (expected {expected}, found {actual})")]
    Checksum {
        path: String,
        expected: String,
        actual: String,
    },
    #[error("baseline payload is not a valid scan result: {0}")]
    Payload(String),
    #[error("fingerprint schemes differ (baseline `{baseline}`, current `{current}`); results are not comparable")]
    Incompatible { baseline: String, current: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineHeader {
    pub format: u32,
    pub label: String,
    pub created_at: DateTime<Utc>,
    pub pack_name: String,
    pub pack_version: String,
    pub fingerprint_scheme: String,
    /// `sha256:` followed by the hex digest of the payload.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Baseline {
    pub header: BaselineHeader,
    pub result: ScanResult,
}

/// Writes `result` as a new baseline file. Refuses to replace an existing
/// file.
pub fn save_baseline(
    result: &ScanResult,
    label: &str,
    path: &Path,
) -> Result<Baseline, BaselineError> {
    let io_err = |source| BaselineError::Io {
        path: path.display().to_string(),
        source,
    };
    let payload = render_structured(result);
    let header = BaselineHeader {
        format: BASELINE_FORMAT,
        label: label.to_string(),
        created_at: Utc::now(),
        pack_name: result.rulepack.name.clone(),
        pack_version: result.rulepack.version.clone(),
        fingerprint_scheme: result.fingerprint_scheme.clone(),
        checksum: format!("sha256:{}", sha256_hex(payload.as_bytes())),
    };
    let mut file = match OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(BaselineError::Exists(path.display().to_string()))
        }
        Err(e) => return Err(io_err(e)),
    };
    let header_line = serde_json::to_string(&header).expect("header serializes");
    file.write_all(header_line.as_bytes()).map_err(io_err)?;
    file.write_all(b"\n").map_err(io_err)?;
    file.write_all(payload.as_bytes()).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    Ok(Baseline {
        header,
        result: result.clone(),
    })
}

pub fn load_baseline(path: &Path) -> Result<Baseline, BaselineError> {
    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| BaselineError::Io {
        path: shown.clone(),
        source,
    })?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| BaselineError::BadHeader(shown.clone()))?;
    let header: BaselineHeader = serde_json::from_slice(&bytes[..split])
        .map_err(|_| BaselineError::BadHeader(shown.clone()))?;
    let payload = &bytes[split + 1..];
    let actual = format!("sha256:{}", sha256_hex(payload));
    if actual != header.checksum {
        return Err(BaselineError::Checksum {
            path: shown,
            expected: header.checksum,
            actual,
        });
    }
    let text = std::str::from_utf8(payload).map_err(|e| BaselineError::Payload(e.to_string()))?;
    let result = parse_structured(text).map_err(|e| BaselineError::Payload(e.to_string()))?;
    Ok(Baseline { header, result })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityChange {
    pub fingerprint: String,
    pub from: Severity,
    pub to: Severity,
}

/// Findings partitioned by fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffResult {
    pub baseline_label: String,
    pub baseline_pack: String,
    pub current_pack: String,
    /// Rule pack differs between the two scans, so new findings may come
    /// from new rules rather than new code.
    pub pack_changed: bool,
    pub new: Vec<Finding>,
    pub fixed: Vec<Finding>,
    /// Current-scan version of findings present in both.
    pub persistent: Vec<Finding>,
    pub severity_changes: Vec<SeverityChange>,
}

impl DiffResult {
    pub fn summary_line(&self) -> String {
        format!(
            "{} new, {} fixed, {} persistent",
            self.new.len(),
            self.fixed.len(),
            self.persistent.len()
        )
    }
}

pub fn diff(baseline: &Baseline, current: &ScanResult) -> Result<DiffResult, BaselineError> {
    let mut d = diff_results(&baseline.result, current)?;
    d.baseline_label = baseline.header.label.clone();
    Ok(d)
}

pub fn diff_results(
    baseline: &ScanResult,
    current: &ScanResult,
) -> Result<DiffResult, BaselineError> {
    if baseline.fingerprint_scheme != current.fingerprint_scheme {
        return Err(BaselineError::Incompatible {
            baseline: baseline.fingerprint_scheme.clone(),
            current: current.fingerprint_scheme.clone(),
        });
    }
    let old: HashMap<&str, &Finding> = baseline
        .findings
        .iter()
        .map(|f| (f.fingerprint.as_str(), f))
        .collect();
    let now: HashMap<&str, &Finding> = current
        .findings
        .iter()
        .map(|f| (f.fingerprint.as_str(), f))
        .collect();

    let mut new = Vec::new();
    let mut persistent = Vec::new();
    let mut severity_changes = Vec::new();
    for f in &current.findings {
        match old.get(f.fingerprint.as_str()) {
            Some(prev) => {
                if prev.severity != f.severity {
                    severity_changes.push(SeverityChange {
                        fingerprint: f.fingerprint.clone(),
                        from: prev.severity,
                        to: f.severity,
                    });
                }
                persistent.push(f.clone());
            }
            None => new.push(f.clone()),
        }
    }
    let fixed = baseline
        .findings
        .iter()
        .filter(|f| !now.contains_key(f.fingerprint.as_str()))
        .cloned()
        .collect();
    let pack_id = |r: &ScanResult| format!("{}@{}", r.rulepack.name, r.rulepack.version);
    Ok(DiffResult {
        baseline_label: String::new(),
        baseline_pack: pack_id(baseline),
        current_pack: pack_id(current),
        pack_changed: baseline.rulepack != current.rulepack,
        new,
        fixed,
        persistent,
        severity_changes,
    })
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use globset::{GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::classify::classify_lines;
use super::language::LanguageRegistry;

/// Bytes inspected for a NUL when deciding whether a file is binary.
const BINARY_PROBE_LEN: usize = 8 * 1024;

/// Version-control metadata directories never descended into.
const VCS_DIRS: &[&str] = &[".git", ".hg", ".svn"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("corpus root {0} does not exist or is not readable")]
    RootMissing(PathBuf),
    #[error("corpus root {0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("invalid glob `{pattern}`: {source}")]
    BadGlob {
        pattern: String,
        #[source]
        source: globset::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    /// Relative to the corpus root, `/`-separated.
    pub path: String,
    pub language: String,
    pub physical_lines: u64,
    pub code_lines: u64,
    pub comment_lines: u64,
    pub blank_lines: u64,
    /// SHA-256 of the raw file bytes, lowercase hex.
    pub digest: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageTotals {
    pub files: u64,
    pub physical_lines: u64,
    pub code_lines: u64,
    pub comment_lines: u64,
    pub blank_lines: u64,
}

impl LanguageTotals {
    fn add(&mut self, f: &SourceFile) {
        self.files += 1;
        self.physical_lines += f.physical_lines;
        self.code_lines += f.code_lines;
        self.comment_lines += f.comment_lines;
        self.blank_lines += f.blank_lines;
    }
}

/// Corpus-wide line totals. `loc` counts physical lines, `ncloc` counts
/// lines containing code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub files: u64,
    pub loc: u64,
    pub ncloc: u64,
    pub comment_lines: u64,
    pub blank_lines: u64,
    pub languages: BTreeMap<String, LanguageTotals>,
}

impl CorpusSummary {
    pub fn from_files<'a>(files: impl IntoIterator<Item = &'a SourceFile>) -> Self {
        let mut summary = CorpusSummary::default();
        for f in files {
            summary.files += 1;
            summary.loc += f.physical_lines;
            summary.ncloc += f.code_lines;
            summary.comment_lines += f.comment_lines;
            summary.blank_lines += f.blank_lines;
            summary
                .languages
                .entry(f.language.clone())
                .or_default()
                .add(f);
        }
        summary
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusInventory {
    pub root: PathBuf,
    /// Sorted by path, no duplicates.
    pub files: Vec<SourceFile>,
    pub totals: BTreeMap<String, LanguageTotals>,
    pub scanned_at: DateTime<Utc>,
    /// Paths skipped because they look binary.
    pub skipped_binary: Vec<String>,
    pub warnings: Vec<String>,
}

impl CorpusInventory {
    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary::from_files(&self.files)
    }

    pub fn file(&self, path: &str) -> Option<&SourceFile> {
        self.files
            .binary_search_by(|f| f.path.as_str().cmp(path))
            .ok()
            .map(|idx| &self.files[idx])
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// When non-empty, only files matching at least one pattern are kept.
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    pub registry: LanguageRegistry,
}

/// Inventories `root` with the built-in language registry.
pub fn ingest(
    root: &Path,
    include: &[String],
    exclude: &[String],
) -> Result<CorpusInventory, IngestError> {
    ingest_with(
        root,
        &IngestOptions {
            include: include.to_vec(),
            exclude: exclude.to_vec(),
            registry: LanguageRegistry::builtin(),
        },
    )
}

enum Outcome {
    File(SourceFile),
    Binary(String),
    Unreadable(String),
}

pub fn ingest_with(root: &Path, opts: &IngestOptions) -> Result<CorpusInventory, IngestError> {
    let root = fs::canonicalize(root).map_err(|_| IngestError::RootMissing(root.to_path_buf()))?;
    if !root.is_dir() {
        return Err(IngestError::NotADirectory(root));
    }
    let include = build_globset(&opts.include)?;
    let exclude = build_globset(&opts.exclude)?;
    let scanned_at = Utc::now();

    let mut warnings = Vec::new();
    let mut candidates = Vec::new();
    let walker = WalkDir::new(&root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| {
            !(e.file_type().is_dir() && VCS_DIRS.iter().any(|d| e.file_name() == *d))
        });
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                warnings.push(format!("walk error: {err}"));
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = relative_path(&root, entry.path());
        if !include.is_empty() && !include.is_match(&rel) {
            continue;
        }
        if exclude.is_match(&rel) {
            continue;
        }
        candidates.push((rel, entry.into_path()));
    }

    let outcomes: Vec<Outcome> = candidates
        .into_par_iter()
        .map(|(rel, abs)| read_source_file(&opts.registry, rel, &abs))
        .collect();

    let mut files = Vec::with_capacity(outcomes.len());
    let mut skipped_binary = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::File(f) => files.push(f),
            Outcome::Binary(p) => skipped_binary.push(p),
            Outcome::Unreadable(w) => warnings.push(w),
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    skipped_binary.sort();

    let totals = CorpusSummary::from_files(&files).languages;
    Ok(CorpusInventory {
        root,
        files,
        totals,
        scanned_at,
        skipped_binary,
        warnings,
    })
}

fn read_source_file(registry: &LanguageRegistry, rel: String, abs: &Path) -> Outcome {
    let bytes = match fs::read(abs) {
        Ok(b) => b,
        Err(err) => return Outcome::Unreadable(format!("{rel}: unreadable: {err}")),
    };
    if is_binary(&bytes) {
        return Outcome::Binary(rel);
    }
    let digest = sha256_hex(&bytes);
    let content = String::from_utf8_lossy(&bytes);
    let language = registry.detect(&rel).to_string();
    let counts = classify_lines(&content, registry.profile(&language)).counts;
    Outcome::File(SourceFile {
        path: rel,
        language,
        physical_lines: counts.physical,
        code_lines: counts.code,
        comment_lines: counts.comment,
        blank_lines: counts.blank,
        digest,
    })
}

/// NUL byte within the first 8 KiB.
pub fn is_binary(bytes: &[u8]) -> bool {
    bytes[..bytes.len().min(BINARY_PROBE_LEN)].contains(&0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn relative_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub(crate) fn build_globset(patterns: &[String]) -> Result<GlobSet, IngestError> {
    let mut builder = GlobSetBuilder::new();
    for pattern in patterns {
        let glob = globset::GlobBuilder::new(pattern)
            .literal_separator(true)
            .build()
            .map_err(|source| IngestError::BadGlob {
                pattern: pattern.clone(),
                source,
            })?;
        builder.add(glob);
    }
    builder.build().map_err(|source| IngestError::BadGlob {
        pattern: patterns.join(","),
        source,
    })
}

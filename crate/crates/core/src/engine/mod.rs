//! Rule execution over an ingested corpus.

mod fingerprint;
mod paired;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::time::Instant;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use regex::RegexSet;
use serde::{Deserialize, Serialize};

pub use fingerprint::{fingerprint, normalize_snippet, FINGERPRINT_SCHEME};
pub use paired::{analyze_paired_resources, PairedAnalysis, PairedHit};

use crate::corpus::{
    analyze_lines, sha256_hex, CorpusInventory, CorpusSummary, LanguageRegistry, LineClass,
    SourceFile,
};
use crate::rulepack::{MatchScope, Matcher, Rule, RulePack};
use crate::severity::Severity;

/// Version of the structured scan-result layout.
pub const RESULT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub fingerprint: String,
    pub rule_id: String,
    pub title: String,
    pub severity: Severity,
    pub path: String,
    /// 1-based.
    pub line: usize,
    /// The flagged source line, trimmed.
    pub snippet: String,
    pub description: String,
    /// How many earlier findings of the same rule in this file share the
    /// normalized snippet.
    pub occurrence_index: u32,
}

impl Finding {
    /// Canonical ordering: severity rank, path, line, rule id.
    pub fn sort_key(&self) -> (Severity, &str, usize, &str) {
        (self.severity, &self.path, self.line, &self.rule_id)
    }
}

pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanResult {
    pub format_version: u32,
    pub started_at: DateTime<Utc>,
    pub duration_ms: u64,
    pub root: String,
    pub rulepack: PackInfo,
    pub fingerprint_scheme: String,
    pub summary: CorpusSummary,
    pub files: Vec<SourceFile>,
    pub findings: Vec<Finding>,
    pub warnings: Vec<String>,
}

impl ScanResult {
    pub fn file(&self, path: &str) -> Option<&SourceFile> {
        self.files
            .binary_search_by(|f| f.path.as_str().cmp(path))
            .ok()
            .map(|i| &self.files[i])
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    /// Only files in these languages are scanned.
    pub languages: Option<BTreeSet<String>>,
    /// Only rules at these severities run.
    pub severities: Option<BTreeSet<Severity>>,
    /// Line-scope pattern rules skip comment-only lines.
    pub non_comment_only: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub registry: LanguageRegistry,
}

/// Rules split by how they execute.
struct Plan<'a> {
    rules: Vec<&'a Rule>,
    /// Line-scope pattern rules, indexed in parallel with `line_set`.
    line_rules: Vec<usize>,
    line_set: RegexSet,
    comment_rules: Vec<usize>,
    config_rules: Vec<usize>,
    paired_rules: Vec<usize>,
}

impl<'a> Plan<'a> {
    fn new(pack: &'a RulePack, opts: &ScanOptions) -> Self {
        let rules: Vec<&Rule> = pack
            .rules
            .iter()
            .filter(|r| {
                opts.severities
                    .as_ref()
                    .is_none_or(|s| s.contains(&r.severity))
            })
            .collect();
        let mut plan = Plan {
            rules,
            line_rules: Vec::new(),
            line_set: RegexSet::empty(),
            comment_rules: Vec::new(),
            config_rules: Vec::new(),
            paired_rules: Vec::new(),
        };
        let mut patterns = Vec::new();
        for (idx, rule) in plan.rules.iter().enumerate() {
            match &rule.matcher {
                Matcher::Pattern {
                    regex,
                    scope: MatchScope::Line,
                } => {
                    plan.line_rules.push(idx);
                    patterns.push(regex.as_str().to_string());
                }
                Matcher::Pattern {
                    scope: MatchScope::Comments,
                    ..
                } => plan.comment_rules.push(idx),
                Matcher::ConfigCheck { .. } => plan.config_rules.push(idx),
                Matcher::PairedResource { .. } => plan.paired_rules.push(idx),
            }
        }
        plan.line_set = RegexSet::new(&patterns).expect("patterns compiled individually");
        plan
    }
}

struct Hit<'r> {
    rule_idx: usize,
    line: usize,
    var: Option<String>,
    rule: &'r Rule,
}

#[derive(Default)]
struct FileOutcome {
    findings: Vec<Finding>,
    warnings: Vec<String>,
}

/// Runs `pack` over every file of `inventory`.
///
/// Files are scanned in parallel; the result is identical for any degree of
/// parallelism.
pub fn scan(inventory: &CorpusInventory, pack: &RulePack, opts: &ScanOptions) -> ScanResult {
    let started_at = Utc::now();
    let clock = Instant::now();
    let plan = Plan::new(pack, opts);

    let run = || -> Vec<FileOutcome> {
        inventory
            .files
            .par_iter()
            .map(|f| scan_file(inventory, f, &plan, opts))
            .collect()
    };
    let outcomes = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(run))
            .unwrap_or_else(|_| run()),
        None => run(),
    };

    let mut findings = Vec::new();
    let mut warnings = inventory.warnings.clone();
    for outcome in outcomes {
        findings.extend(outcome.findings);
        warnings.extend(outcome.warnings);
    }
    sort_findings(&mut findings);

    ScanResult {
        format_version: RESULT_FORMAT_VERSION,
        started_at,
        duration_ms: clock.elapsed().as_millis() as u64,
        root: inventory.root.display().to_string(),
        rulepack: PackInfo {
            name: pack.name.clone(),
            version: pack.version.clone(),
        },
        fingerprint_scheme: FINGERPRINT_SCHEME.to_string(),
        summary: inventory.summary(),
        files: inventory.files.clone(),
        findings,
        warnings,
    }
}

fn scan_file(
    inventory: &CorpusInventory,
    file: &SourceFile,
    plan: &Plan<'_>,
    opts: &ScanOptions,
) -> FileOutcome {
    let mut out = FileOutcome::default();
    if let Some(langs) = &opts.languages {
        if !langs.contains(&file.language) {
            return out;
        }
    }
    let bytes = match fs::read(inventory.root.join(&file.path)) {
        Ok(b) => b,
        Err(err) => {
            out.warnings
                .push(format!("{}: unreadable at scan time: {err}", file.path));
            return out;
        }
    };
    if sha256_hex(&bytes) != file.digest {
        out.warnings
            .push(format!("{}: content changed since ingest", file.path));
    }
    let content = String::from_utf8_lossy(&bytes);
    let raw_lines: Vec<&str> = content.lines().collect();
    let (details, unterminated) = analyze_lines(&content, opts.registry.profile(&file.language));
    if unterminated {
        out.warnings.push(format!(
            "{}: unterminated block comment at end of file",
            file.path
        ));
    }

    let mut hits: Vec<Hit> = Vec::new();
    let applies = |idx: &usize| plan.rules[*idx].applies_to(&file.language);

    let line_rules: Vec<usize> = plan.line_rules.iter().copied().filter(applies).collect();
    if !line_rules.is_empty() {
        let active: BTreeSet<usize> = line_rules.iter().copied().collect();
        for (i, line) in raw_lines.iter().enumerate() {
            if opts.non_comment_only && details[i].class == LineClass::Comment {
                continue;
            }
            for set_idx in plan.line_set.matches(line).iter() {
                let rule_idx = plan.line_rules[set_idx];
                if active.contains(&rule_idx) {
                    hits.push(Hit {
                        rule_idx,
                        line: i + 1,
                        var: None,
                        rule: plan.rules[rule_idx],
                    });
                }
            }
        }
    }

    for &rule_idx in plan.comment_rules.iter().filter(|i| applies(i)) {
        let rule = plan.rules[rule_idx];
        let Matcher::Pattern { regex, .. } = &rule.matcher else {
            continue;
        };
        for (i, d) in details.iter().enumerate() {
            if !d.comment.is_empty() && regex.is_match(&d.comment) {
                hits.push(Hit {
                    rule_idx,
                    line: i + 1,
                    var: None,
                    rule,
                });
            }
        }
    }

    for &rule_idx in plan.config_rules.iter().filter(|i| applies(i)) {
        let rule = plan.rules[rule_idx];
        let Matcher::ConfigCheck { regex, files, .. } = &rule.matcher else {
            continue;
        };
        if !files.is_match(&file.path) {
            continue;
        }
        for (i, line) in raw_lines.iter().enumerate() {
            if regex.is_match(line) {
                hits.push(Hit {
                    rule_idx,
                    line: i + 1,
                    var: None,
                    rule,
                });
            }
        }
    }

    for &rule_idx in plan.paired_rules.iter().filter(|i| applies(i)) {
        let rule = plan.rules[rule_idx];
        let analysis = paired::analyze_details(&details, rule);
        if analysis.whole_file_fallback {
            out.warnings.push(format!(
                "{}: unbalanced braces, rule {} used whole-file scope",
                file.path, rule.id
            ));
        }
        hits.extend(analysis.hits.into_iter().map(|h| Hit {
            rule_idx,
            line: h.line,
            var: Some(h.var),
            rule,
        }));
    }

    // one finding per (rule, line); occurrence indices follow line order
    hits.sort_by_key(|h| (h.line, h.rule_idx));
    hits.dedup_by_key(|h| (h.line, h.rule_idx));
    let mut occurrences: HashMap<(usize, String), u32> = HashMap::new();
    for hit in hits {
        let snippet = raw_lines[hit.line - 1].trim().to_string();
        let normalized = normalize_snippet(&snippet);
        let counter = occurrences
            .entry((hit.rule_idx, normalized.clone()))
            .or_insert(0);
        let occurrence_index = *counter;
        *counter += 1;
        out.findings.push(Finding {
            fingerprint: fingerprint(&hit.rule.id, &file.path, &normalized, occurrence_index),
            rule_id: hit.rule.id.clone(),
            title: hit.rule.title.clone(),
            severity: hit.rule.severity,
            path: file.path.clone(),
            line: hit.line,
            snippet,
            description: hit.rule.describe(&file.path, hit.line, hit.var.as_deref()),
            occurrence_index,
        });
    }
    out
}

#[cfg(test)]
mod tests;

//! Language proportions, severity histograms and vulnerability density.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use globset::GlobSet;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_globset, CorpusSummary, SourceFile};
use crate::engine::{Finding, ScanResult};
use crate::severity::Severity;

/// Which line count divides the finding count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    /// Physical lines.
    Loc,
    /// Lines containing code.
    #[default]
    Ncloc,
}

impl DensityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DensityKind::Loc => "LOC",
            DensityKind::Ncloc => "NCLOC",
        }
    }

    pub fn lines_of(self, f: &SourceFile) -> u64 {
        match self {
            DensityKind::Loc => f.physical_lines,
            DensityKind::Ncloc => f.code_lines,
        }
    }

    pub fn lines_in(self, s: &CorpusSummary) -> u64 {
        match self {
            DensityKind::Loc => s.loc,
            DensityKind::Ncloc => s.ncloc,
        }
    }
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DensityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "loc" => Ok(DensityKind::Loc),
            "ncloc" => Ok(DensityKind::Ncloc),
            _ => Err(format!(
                "unknown density denominator `{s}` (expected loc or ncloc)"
            )),
        }
    }
}

pub const NO_FINDINGS: &str = "no findings";

/// Lines per finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMetric {
    pub findings_count: u64,
    pub denominator_lines: u64,
    pub denominator_kind: DensityKind,
    /// `denominator_lines / findings_count`; absent when there are no
    /// findings or no lines.
    pub ratio: Option<f64>,
    /// `1:N`, N rounded half away from zero, or a sentinel.
    pub display: String,
}

impl DensityMetric {
    pub fn has_findings(&self) -> bool {
        self.findings_count > 0
    }
}

impl fmt::Display for DensityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ratio {
            Some(r) => write!(
                f,
                "{} ({:.1} {} per finding)",
                self.display, r, self.denominator_kind
            ),
            None => f.write_str(&self.display),
        }
    }
}

pub fn density(findings_count: u64, lines: u64, kind: DensityKind) -> DensityMetric {
    let (ratio, display) = if findings_count == 0 {
        (None, NO_FINDINGS.to_string())
    } else if lines == 0 {
        (None, format!("undefined (0 {kind})"))
    } else {
        let n = findings_count as u128;
        let l = lines as u128;
        // round(l / n) with ties away from zero, in exact integer arithmetic
        let rounded = (2 * l + n) / (2 * n);
        (
            Some(lines as f64 / findings_count as f64),
            format!("1:{rounded}"),
        )
    };
    DensityMetric {
        findings_count,
        denominator_lines: lines,
        denominator_kind: kind,
        ratio,
        display,
    }
}

/// Finding counts for all seven levels, zero-filled, in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityHistogram(pub BTreeMap<Severity, u64>);

impl SeverityHistogram {
    pub fn get(&self, s: Severity) -> u64 {
        self.0.get(&s).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Severity, u64)> + '_ {
        self.0.iter().map(|(s, c)| (*s, *c))
    }
}

pub fn severity_histogram<'a>(
    findings: impl IntoIterator<Item = &'a Finding>,
) -> SeverityHistogram {
    let mut counts: BTreeMap<Severity, u64> = Severity::ALL.iter().map(|s| (*s, 0)).collect();
    for f in findings {
        *counts.entry(f.severity).or_default() += 1;
    }
    SeverityHistogram(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageShare {
    pub language: String,
    pub loc: u64,
    pub percent: f64,
}

/// Share of physical lines per language, largest first.
pub fn language_proportions(summary: &CorpusSummary) -> Vec<LanguageShare> {
    let total: u64 = summary.languages.values().map(|t| t.physical_lines).sum();
    if total == 0 {
        return Vec::new();
    }
    let mut shares: Vec<LanguageShare> = summary
        .languages
        .iter()
        .map(|(lang, t)| LanguageShare {
            language: lang.clone(),
            loc: t.physical_lines,
            percent: t.physical_lines as f64 * 100.0 / total as f64,
        })
        .collect();
    shares.sort_by(|a, b| b.loc.cmp(&a.loc).then_with(|| a.language.cmp(&b.language)));
    shares
}

/// How files are assigned to rows of a per-group density table.
#[derive(Debug, Clone)]
pub enum Grouping {
    /// First path component; files at the root go to [`ROOT_GROUP`].
    TopLevelDirectory,
    /// Ordered `(group, glob)` pairs; first match wins, no match goes to
    /// [`UNGROUPED`].
    Mapping(Vec<(String, String)>),
}

pub const ROOT_GROUP: &str = "(root)";
pub const UNGROUPED: &str = "ungrouped";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub sloc: u64,
    /// Distinct (path, line) pairs carrying at least one finding.
    pub dangerous_lines: u64,
    pub findings: u64,
    pub density: DensityMetric,
}

impl GroupRow {
    pub fn new(
        group: impl Into<String>,
        sloc: u64,
        dangerous_lines: u64,
        findings: u64,
        kind: DensityKind,
    ) -> Self {
        GroupRow {
            group: group.into(),
            sloc,
            dangerous_lines,
            findings,
            density: density(findings, sloc, kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    pub kind: DensityKind,
    pub rows: Vec<GroupRow>,
    pub total: GroupRow,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid group pattern: {0}")]
pub struct GroupingError(String);

pub fn per_group_density(
    result: &ScanResult,
    grouping: &Grouping,
    kind: DensityKind,
) -> Result<GroupTable, GroupingError> {
    per_group_density_of(result, &result.findings, grouping, kind)
}

/// Same as [`per_group_density`] over a chosen subset of findings.
pub fn per_group_density_of(
    result: &ScanResult,
    findings: &[Finding],
    grouping: &Grouping,
    kind: DensityKind,
) -> Result<GroupTable, GroupingError> {
    let matchers: Vec<(String, GlobSet)> = match grouping {
        Grouping::TopLevelDirectory => Vec::new(),
        Grouping::Mapping(pairs) => pairs
            .iter()
            .map(|(group, glob)| {
                build_globset(std::slice::from_ref(glob))
                    .map(|set| (group.clone(), set))
                    .map_err(|e| GroupingError(e.to_string()))
            })
            .collect::<Result<_, _>>()?,
    };
    let group_of = |path: &str| -> String {
        match grouping {
            Grouping::TopLevelDirectory => match path.split_once('/') {
                Some((top, _)) => top.to_string(),
                None => ROOT_GROUP.to_string(),
            },
            Grouping::Mapping(_) => matchers
                .iter()
                .find(|(_, set)| set.is_match(path))
                .map(|(g, _)| g.clone())
                .unwrap_or_else(|| UNGROUPED.to_string()),
        }
    };

    #[derive(Default)]
    struct Acc {
        sloc: u64,
        lines: BTreeSet<(String, usize)>,
        findings: u64,
    }
    let mut groups: BTreeMap<String, Acc> = BTreeMap::new();
    let mut file_groups: BTreeMap<&str, String> = BTreeMap::new();
    for f in &result.files {
        let g = group_of(&f.path);
        groups.entry(g.clone()).or_default().sloc += kind.lines_of(f);
        file_groups.insert(&f.path, g);
    }
    for finding in findings {
        let g = file_groups
            .get(finding.path.as_str())
            .cloned()
            .unwrap_or_else(|| group_of(&finding.path));
        let acc = groups.entry(g).or_default();
        acc.findings += 1;
        acc.lines.insert((finding.path.clone(), finding.line));
    }

    let rows: Vec<GroupRow> = groups
        .into_iter()
        .map(|(g, acc)| GroupRow::new(g, acc.sloc, acc.lines.len() as u64, acc.findings, kind))
        .collect();
    let total = GroupRow::new(
        "Total",
        rows.iter().map(|r| r.sloc).sum(),
        rows.iter().map(|r| r.dangerous_lines).sum(),
        rows.iter().map(|r| r.findings).sum(),
        kind,
    );
    Ok(GroupTable { kind, rows, total })
}

/// Everything a report shows about one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total_findings: u64,
    pub histogram: SeverityHistogram,
    pub density: DensityMetric,
    pub languages: Vec<LanguageShare>,
}

pub fn compute(result: &ScanResult, kind: DensityKind) -> MetricsReport {
    compute_for(result, &result.findings, kind)
}

/// Metrics over a chosen subset of the findings, e.g. a triage working view.
pub fn compute_for<'a>(
    result: &ScanResult,
    findings: impl IntoIterator<Item = &'a Finding>,
    kind: DensityKind,
) -> MetricsReport {
    let histogram = severity_histogram(findings);
    let total = histogram.total();
    MetricsReport {
        total_findings: total,
        density: density(total, kind.lines_in(&result.summary), kind),
        histogram,
        languages: language_proportions(&result.summary),
    }
}

//! Rendering of scan results, metrics and diffs.
//!
//! The structured format is pretty-printed JSON whose key order follows the
//! struct field order (maps are `BTreeMap`s), so equal values always render
//! to identical bytes.

use std::fmt::Write as _;

use serde::Serialize;

use crate::baseline::DiffResult;
use crate::engine::{Finding, ScanResult};
use crate::metrics::MetricsReport;
use crate::severity::Severity;
use crate::triage::{TriageState, ViewEntry, WorkingView};

pub const CSV_HEADER: [&str; 8] = [
    "fingerprint",
    "severity",
    "rule_id",
    "title",
    "path",
    "line",
    "snippet",
    "state",
];

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("report types serialize");
    out.push('\n');
    out
}

pub fn render_structured(result: &ScanResult) -> String {
    to_pretty(result)
}

pub fn parse_structured(text: &str) -> Result<ScanResult, serde_json::Error> {
    serde_json::from_str(text)
}

/// Scan result with its metrics, as served to clients and written next to
/// the raw result.
#[derive(Serialize)]
struct WithMetrics<'a> {
    result: &'a ScanResult,
    metrics: &'a MetricsReport,
}

pub fn render_structured_with_metrics(result: &ScanResult, metrics: &MetricsReport) -> String {
    to_pretty(&WithMetrics { result, metrics })
}

pub fn render_structured_diff(diff: &DiffResult) -> String {
    to_pretty(diff)
}

#[derive(Serialize)]
struct BacklogJson<'a> {
    total: usize,
    suppressed: usize,
    open: usize,
    entries: Vec<BacklogEntry<'a>>,
}

#[derive(Serialize)]
struct BacklogEntry<'a> {
    #[serde(flatten)]
    finding: &'a Finding,
    state: TriageState,
    note: &'a str,
    suppressed: bool,
}

pub fn render_backlog_json(view: &WorkingView, rows: &[&ViewEntry]) -> String {
    to_pretty(&BacklogJson {
        total: view.total,
        suppressed: view.suppressed,
        open: view.open,
        entries: rows
            .iter()
            .map(|e| BacklogEntry {
                finding: &e.finding,
                state: e.state,
                note: &e.note,
                suppressed: e.suppressed,
            })
            .collect(),
    })
}

fn csv_of<'a>(rows: impl IntoIterator<Item = (&'a Finding, TriageState)>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for (f, state) in rows {
        let line = f.line.to_string();
        w.write_record([
            f.fingerprint.as_str(),
            f.severity.as_str(),
            f.rule_id.as_str(),
            f.title.as_str(),
            f.path.as_str(),
            line.as_str(),
            f.snippet.as_str(),
            state.as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("inputs are UTF-8")
}

/// Backlog CSV with triage states.
pub fn render_csv<'a>(rows: impl IntoIterator<Item = &'a ViewEntry>) -> String {
    csv_of(rows.into_iter().map(|e| (&e.finding, e.state)))
}

/// Findings CSV for an untriaged scan.
pub fn render_findings_csv<'a>(findings: impl IntoIterator<Item = &'a Finding>) -> String {
    csv_of(findings.into_iter().map(|f| (f, TriageState::Unreviewed)))
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn duration_text(ms: u64) -> String {
    if ms < 1000 {
        format!("{ms} ms")
    } else {
        format!("{:.2} s", ms as f64 / 1000.0)
    }
}

pub fn render_summary(result: &ScanResult, metrics: &MetricsReport) -> String {
    let s = &result.summary;
    let mut out = String::new();
    let _ = writeln!(out, "Scan of {}", result.root);
    let _ = writeln!(
        out,
        "Rule pack:  {} {}",
        result.rulepack.name, result.rulepack.version
    );
    let _ = writeln!(out, "Duration:   {}", duration_text(result.duration_ms));
    let _ = writeln!(out, "Files:      {}", thousands(s.files));
    let _ = writeln!(out, "LOC:        {}", thousands(s.loc));
    let _ = writeln!(out, "NCLOC:      {}", thousands(s.ncloc));
    out.push('\n');
    out.push_str("Languages (share of LOC)\n");
    if metrics.languages.is_empty() {
        out.push_str("  (none)\n");
    }
    for share in &metrics.languages {
        let _ = writeln!(
            out,
            "  {:<10} {:>6.2}%  {:>12}",
            share.language,
            share.percent,
            thousands(share.loc)
        );
    }
    out.push('\n');
    out.push_str("Findings by severity\n");
    for (sev, count) in metrics.histogram.iter() {
        let _ = writeln!(out, "  {:<20} {:>8}", sev.label(), thousands(count));
    }
    let _ = writeln!(
        out,
        "  {:<20} {:>8}",
        "Total",
        thousands(metrics.total_findings)
    );
    out.push('\n');
    let _ = writeln!(
        out,
        "Density ({}):  {}",
        metrics.density.denominator_kind.as_str(),
        metrics.density
    );
    if !result.warnings.is_empty() {
        let _ = writeln!(out, "Warnings:   {}", result.warnings.len());
    }
    out
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

const SEVERITY_COLORS: [&str; 7] = [
    "#7f0000", "#d7301f", "#fc8d59", "#fdcc8a", "#6baed6", "#9e9ac8", "#bdbdbd",
];
const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

fn histogram_svg(metrics: &MetricsReport) -> String {
    let max = metrics
        .histogram
        .iter()
        .map(|(_, c)| c)
        .max()
        .unwrap_or(0)
        .max(1);
    let (bar_h, gap, label_w, width) = (22u64, 6u64, 150u64, 360u64);
    let height = 7 * (bar_h + gap) + gap;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" class=\"chart\" id=\"severity-chart\" width=\"{}\" height=\"{height}\" role=\"img\" aria-label=\"Findings by severity\">",
        label_w + width + 60
    );
    for (i, (sev, count)) in metrics.histogram.iter().enumerate() {
        let y = gap + i as u64 * (bar_h + gap);
        let w = count * width / max;
        let _ = write!(
            svg,
            "<text x=\"0\" y=\"{}\">{}</text><rect x=\"{label_w}\" y=\"{y}\" width=\"{w}\" height=\"{bar_h}\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{count}</text>",
            y + 16,
            sev.label(),
            SEVERITY_COLORS[sev.rank() as usize - 1],
            label_w + w + 6,
            y + 16
        );
    }
    svg.push_str("</svg>");
    svg
}

fn languages_svg(metrics: &MetricsReport) -> String {
    let (bar_w, bar_h) = (500.0f64, 28.0f64);
    let rows = metrics.languages.len() as f64;
    let height = bar_h + 12.0 + rows * 20.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" class=\"chart\" id=\"language-chart\" width=\"{bar_w}\" height=\"{height}\" role=\"img\" aria-label=\"Share of lines by language\">"
    );
    let mut x = 0.0;
    for (i, share) in metrics.languages.iter().enumerate() {
        let w = bar_w * share.percent / 100.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(
            svg,
            "<rect x=\"{x:.2}\" y=\"0\" width=\"{w:.2}\" height=\"{bar_h}\" fill=\"{color}\"/>"
        );
        let y = bar_h + 12.0 + i as f64 * 20.0 + 4.0;
        let _ = write!(
            svg,
            "<rect x=\"0\" y=\"{:.0}\" width=\"12\" height=\"12\" fill=\"{color}\"/><text x=\"18\" y=\"{:.0}\">{} {:.2}%</text>",
            y - 10.0,
            y,
            esc(&share.language),
            share.percent
        );
        x += w;
    }
    svg.push_str("</svg>");
    svg
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em;color:#222}\
table{border-collapse:collapse;width:100%}th,td{border:1px solid #ccc;padding:4px 6px;text-align:left;vertical-align:top}\
th{background:#eee;cursor:pointer}td.snippet{font-family:monospace;white-space:pre-wrap}\
.banner{padding:1em;background:#e8f5e9;border:1px solid #66bb6a;font-size:1.2em}\
.diff span{margin-right:1.5em;font-weight:bold}svg.chart text{font-size:13px}\
dl.summary{display:grid;grid-template-columns:max-content auto;gap:2px 1em}";

const SORT_SCRIPT: &str = "document.querySelectorAll('table.sortable th').forEach(function(th,idx){\
th.addEventListener('click',function(){var tb=th.closest('table').tBodies[0];\
var asc=th.dataset.dir!=='asc';th.dataset.dir=asc?'asc':'desc';\
var rows=Array.prototype.slice.call(tb.rows);rows.sort(function(a,b){\
var x=a.cells[idx].dataset.key||a.cells[idx].textContent,y=b.cells[idx].dataset.key||b.cells[idx].textContent;\
var nx=parseFloat(x),ny=parseFloat(y);var c=(!isNaN(nx)&&!isNaN(ny))?nx-ny:x.localeCompare(y);\
return asc?c:-c;});rows.forEach(function(r){tb.appendChild(r);});});});";

/// Self-contained HTML page: no external scripts, styles or images.
pub fn render_html(
    result: &ScanResult,
    metrics: &MetricsReport,
    diff: Option<&DiffResult>,
) -> String {
    let s = &result.summary;
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(h, "<title>Scan report: {}</title>", esc(&result.root));
    let _ = writeln!(h, "<style>{STYLE}</style>\n</head>\n<body>");
    let _ = writeln!(h, "<h1>Scan report: {}</h1>", esc(&result.root));
    let _ = writeln!(
        h,
        "<dl class=\"summary\"><dt>Rule pack</dt><dd>{} {}</dd><dt>Started</dt><dd>{}</dd><dt>Duration</dt><dd>{}</dd>\
<dt>Files</dt><dd>{}</dd><dt>LOC</dt><dd>{}</dd><dt>NCLOC</dt><dd>{}</dd><dt>Findings</dt><dd id=\"total-findings\">{}</dd>\
<dt>Density ({})</dt><dd id=\"density\">{}</dd></dl>",
        esc(&result.rulepack.name),
        esc(&result.rulepack.version),
        result.started_at.to_rfc3339(),
        duration_text(result.duration_ms),
        thousands(s.files),
        thousands(s.loc),
        thousands(s.ncloc),
        metrics.total_findings,
        metrics.density.denominator_kind.as_str(),
        esc(&metrics.density.display)
    );
    if let Some(d) = diff {
        let _ = writeln!(
            h,
            "<h2>Changes since baseline {}</h2>\n<p class=\"diff\"><span id=\"diff-new\">New: {}</span><span id=\"diff-fixed\">Fixed: {}</span><span id=\"diff-persistent\">Persistent: {}</span></p>",
            esc(&d.baseline_label),
            d.new.len(),
            d.fixed.len(),
            d.persistent.len()
        );
        if d.pack_changed {
            let _ = writeln!(
                h,
                "<p>Rule pack changed from {} to {}.</p>",
                esc(&d.baseline_pack),
                esc(&d.current_pack)
            );
        }
    }
    h.push_str("<h2>Findings by severity</h2>\n");
    h.push_str(&histogram_svg(metrics));
    h.push_str("\n<h2>Languages</h2>\n");
    h.push_str(&languages_svg(metrics));
    h.push_str("\n<h2>Findings</h2>\n");
    if result.findings.is_empty() {
        h.push_str("<p class=\"banner\" id=\"no-findings\">No findings</p>\n");
    } else {
        h.push_str("<table class=\"sortable\" id=\"findings\">\n<thead><tr><th>Severity</th><th>Rule</th><th>Title</th><th>Path</th><th>Line</th><th>Snippet</th><th>Fingerprint</th></tr></thead>\n<tbody>\n");
        for f in &result.findings {
            let _ = writeln!(
                h,
                "<tr class=\"finding\"><td data-key=\"{}\">{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td class=\"snippet\">{}</td><td>{}</td></tr>",
                f.severity.rank(),
                f.severity.label(),
                esc(&f.rule_id),
                esc(&f.title),
                esc(&f.path),
                f.line,
                esc(&f.snippet),
                esc(&f.fingerprint)
            );
        }
        h.push_str("</tbody>\n</table>\n");
    }
    if !result.warnings.is_empty() {
        h.push_str("<h2>Warnings</h2>\n<ul>\n");
        for w in &result.warnings {
            let _ = writeln!(h, "<li>{}</li>", esc(w));
        }
        h.push_str("</ul>\n");
    }
    let _ = writeln!(h, "<script>{SORT_SCRIPT}</script>\n</body>\n</html>");
    h
}

/// Per-severity counts parsed back out of a rendered CSV, for cross-format
/// consistency checks.
pub fn csv_severity_counts(
    csv_text: &str,
) -> Result<std::collections::BTreeMap<Severity, u64>, String> {
    let mut counts = std::collections::BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let sev: Severity = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .map_err(|e: crate::severity::ParseSeverityError| e.to_string())?;
        *counts.entry(sev).or_insert(0) += 1;
    }
    Ok(counts)
}

//! Lexical allocation/release pairing.
//!
//! Scopes are approximated by brace depth: everything between a `{` at
//! depth 0 and its matching `}` is one function body. Inside a scope the
//! analyzer tracks which identifiers were allocated and which were
//! released, emitting a hit for allocations never released before the
//! scope closes and for releases that repeat with no rebinding in between.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::{analyze_lines, LanguageProfile, LineDetail};
use crate::rulepack::{Matcher, PairCheck, Rule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedHit {
    /// 1-based.
    pub line: usize,
    pub var: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairedAnalysis {
    pub hits: Vec<PairedHit>,
    /// Braces did not balance, so the whole file was treated as one scope.
    pub whole_file_fallback: bool,
}

/// Runs a `paired_resource` rule over `content`. Rules with any other
/// matcher produce no hits.
pub fn analyze_paired_resources(
    content: &str,
    profile: &LanguageProfile,
    rule: &Rule,
) -> PairedAnalysis {
    let (lines, _) = analyze_lines(content, profile);
    analyze_details(&lines, rule)
}

pub(crate) fn analyze_details(lines: &[LineDetail], rule: &Rule) -> PairedAnalysis {
    let Matcher::PairedResource {
        alloc,
        release,
        check,
    } = &rule.matcher
    else {
        return PairedAnalysis::default();
    };
    match run(lines, alloc, release, *check, true) {
        Some(hits) => PairedAnalysis {
            hits,
            whole_file_fallback: false,
        },
        None => PairedAnalysis {
            hits: run(lines, alloc, release, *check, false).unwrap_or_default(),
            whole_file_fallback: true,
        },
    }
}

#[derive(Debug)]
enum Event {
    Alloc(String),
    Release(String),
    Assign(String),
    Open,
    Close,
}

struct Allocation {
    var: String,
    line: usize,
    released: bool,
}

#[derive(Default)]
struct ScopeState {
    allocations: Vec<Allocation>,
    /// Identifiers released and not rebound since.
    released: HashSet<String>,
}

impl ScopeState {
    fn flush(&mut self, check: PairCheck, hits: &mut Vec<PairedHit>) {
        if check == PairCheck::MissingRelease {
            hits.extend(
                self.allocations
                    .iter()
                    .filter(|a| !a.released)
                    .map(|a| PairedHit {
                        line: a.line,
                        var: a.var.clone(),
                    }),
            );
        }
        self.allocations.clear();
        self.released.clear();
    }
}

fn assignment_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?P<var>[A-Za-z_]\w*(?:(?:\.|->)[A-Za-z_]\w*)*)\s*=(?:[^=]|$)")
            .expect("static regex")
    })
}

/// `None` when scoped analysis finds unbalanced braces.
fn run(
    lines: &[LineDetail],
    alloc: &Regex,
    release: &Regex,
    check: PairCheck,
    scoped: bool,
) -> Option<Vec<PairedHit>> {
    let mut hits = Vec::new();
    let mut state = ScopeState::default();
    let mut depth: i64 = 0;

    for (idx, detail) in lines.iter().enumerate() {
        let line_no = idx + 1;
        for event in line_events(&detail.code, alloc, release, scoped) {
            match event {
                Event::Alloc(var) => {
                    state.released.remove(&var);
                    state.allocations.push(Allocation {
                        var,
                        line: line_no,
                        released: false,
                    });
                }
                Event::Release(var) => {
                    for a in state.allocations.iter_mut().filter(|a| a.var == var) {
                        a.released = true;
                    }
                    if !state.released.insert(var.clone()) && check == PairCheck::DoubleRelease {
                        hits.push(PairedHit { line: line_no, var });
                    }
                }
                Event::Assign(var) => {
                    state.released.remove(&var);
                }
                Event::Open => depth += 1,
                Event::Close => {
                    depth -= 1;
                    if depth < 0 {
                        return None;
                    }
                    if depth == 0 {
                        state.flush(check, &mut hits);
                    }
                }
            }
        }
    }
    if depth != 0 {
        return None;
    }
    state.flush(check, &mut hits);

    let mut seen = HashMap::new();
    hits.retain(|h| seen.insert(h.line, ()).is_none());
    hits.sort_by_key(|h| h.line);
    Some(hits)
}

/// Events on one line of code text, in source order.
fn line_events(code: &str, alloc: &Regex, release: &Regex, scoped: bool) -> Vec<Event> {
    let mut events: Vec<(usize, u8, Event)> = Vec::new();
    for caps in alloc.captures_iter(code) {
        if let Some(m) = caps.name("var") {
            events.push((m.start(), 1, Event::Alloc(m.as_str().to_string())));
        }
    }
    for caps in release.captures_iter(code) {
        if let Some(m) = caps.name("var") {
            events.push((m.start(), 1, Event::Release(m.as_str().to_string())));
        }
    }
    for caps in assignment_regex().captures_iter(code) {
        let m = caps.name("var").expect("group always participates");
        if !is_dereference(code, m.start()) {
            // sorts after an Alloc of the same identifier at the same offset
            events.push((m.start(), 2, Event::Assign(m.as_str().to_string())));
        }
    }
    if scoped {
        for (pos, ch) in code.char_indices() {
            match ch {
                '{' => events.push((pos, 0, Event::Open)),
                '}' => events.push((pos, 0, Event::Close)),
                _ => {}
            }
        }
    }
    events.sort_by_key(|(pos, order, _)| (*pos, *order));
    events.into_iter().map(|(_, _, e)| e).collect()
}

/// True for `*p = ...` (a store through `p`), false for `T *p = ...`
/// (a declaration that binds `p`).
fn is_dereference(code: &str, ident_start: usize) -> bool {
    let before = code[..ident_start].trim_end();
    let Some(stripped) = before.strip_suffix('*') else {
        return false;
    };
    let prev = stripped.trim_end().chars().next_back();
    !matches!(prev, Some(c) if c.is_alphanumeric() || c == '_' || c == '*')
}

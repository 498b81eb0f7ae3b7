//! Declarative vulnerability rules, the rule-file format and the built-in
//! pack.
//!
//! Rule files are TOML. Each `[[rule]]` table is one rule:
//!
//! ```toml
//! name = "team-pack"
//! version = "0.3.0"
//!
//! [[rule]]
//! id = "cs.sql-concat"
//! title = "SQL Built by Concatenation"
//! severity = "high"              # any of the seven level names
//! matcher = "pattern"            # pattern | paired_resource | config_check
//! pattern = 'SqlCommand\(.*\+'
//! languages = ["C#"]             # optional, default any
//! description = "..."            # optional
//! remediation = "..."            # optional
//! ```
//!
//! `paired_resource` rules take `alloc_pattern` and `release_pattern`
//! (both with a `(?P<var>...)` group) plus `check = "missing_release" |
//! "double_release"`. `config_check` rules take `pattern` and an optional
//! `files` glob list. Pattern rules may set `scope = "comments"` to match
//! only comment text.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use globset::GlobSet;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageRegistry, UNKNOWN_LANGUAGE};
use crate::severity::Severity;

const BUILTIN_TOML: &str = include_str!("builtin.toml");

/// Files inspected by `config_check` rules that set no `files` list.
pub const DEFAULT_CONFIG_FILES: &[&str] = &[
    "**/*.config",
    "**/*.xml",
    "**/*.json",
    "**/*.ini",
    "**/*.properties",
    "**/*.yaml",
    "**/*.yml",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchScope {
    /// The whole physical line.
    Line,
    /// Only the comment text on the line.
    Comments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCheck {
    /// Allocation with no release of the same identifier in scope.
    MissingRelease,
    /// Second release of an identifier with no rebinding in between.
    DoubleRelease,
}

#[derive(Debug, Clone)]
pub enum Matcher {
    Pattern {
        regex: Regex,
        scope: MatchScope,
    },
    PairedResource {
        alloc: Regex,
        release: Regex,
        check: PairCheck,
    },
    ConfigCheck {
        regex: Regex,
        files: GlobSet,
        file_patterns: Vec<String>,
    },
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub title: String,
    pub description: String,
    pub severity: Severity,
    /// Empty means any language.
    pub languages: Vec<String>,
    pub matcher: Matcher,
    pub remediation: String,
}

impl Rule {
    pub fn applies_to(&self, language: &str) -> bool {
        self.languages.is_empty() || self.languages.iter().any(|l| l == language)
    }

    /// Description with `{var}`, `{path}` and `{line}` filled in.
    pub fn describe(&self, path: &str, line: usize, var: Option<&str>) -> String {
        let mut text = self
            .description
            .replace("{path}", path)
            .replace("{line}", &line.to_string());
        if let Some(var) = var {
            text = text.replace("{var}", var);
        }
        text
    }

    pub fn to_def(&self) -> RuleDef {
        let mut def = RuleDef {
            id: self.id.clone(),
            title: self.title.clone(),
            severity: self.severity.as_str().to_string(),
            languages: self.languages.clone(),
            description: self.description.clone(),
            remediation: self.remediation.clone(),
            ..RuleDef::default()
        };
        match &self.matcher {
            Matcher::Pattern { regex, scope } => {
                def.matcher = "pattern".into();
                def.pattern = Some(regex.as_str().to_string());
                if *scope == MatchScope::Comments {
                    def.scope = Some("comments".into());
                }
            }
            Matcher::PairedResource {
                alloc,
                release,
                check,
            } => {
                def.matcher = "paired_resource".into();
                def.alloc_pattern = Some(alloc.as_str().to_string());
                def.release_pattern = Some(release.as_str().to_string());
                def.check = Some(
                    match check {
                        PairCheck::MissingRelease => "missing_release",
                        PairCheck::DoubleRelease => "double_release",
                    }
                    .into(),
                );
            }
            Matcher::ConfigCheck {
                regex,
                file_patterns,
                ..
            } => {
                def.matcher = "config_check".into();
                def.pattern = Some(regex.as_str().to_string());
                def.files = file_patterns.clone();
            }
        }
        def
    }
}

/// A rule as written in a rule file, before validation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleDef {
    pub id: String,
    pub title: String,
    pub severity: String,
    pub matcher: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alloc_pattern: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub release_pattern: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub languages: Vec<String>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub remediation: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulePackDef {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub version: String,
    #[serde(default, rename = "rule")]
    pub rules: Vec<RuleDef>,
    /// 1-based line of each rule's `id` in the source file, when known.
    #[serde(skip)]
    pub lines: Vec<Option<usize>>,
}

impl RulePackDef {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut def: RulePackDef = toml::from_str(text).map_err(|e| RuleError::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        def.lines = rule_id_lines(text, def.rules.len());
        Ok(def)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("rule pack definitions always serialize")
    }

    /// Validates and compiles. Fails on any error-level diagnostic.
    pub fn compile(&self, registry: &LanguageRegistry) -> Result<RulePack, RuleError> {
        let diagnostics = validate_pack_with(self, registry);
        let errors: Vec<Diagnostic> = diagnostics
            .into_iter()
            .filter(|d| d.level == DiagnosticLevel::Error)
            .collect();
        if !errors.is_empty() {
            return Err(RuleError::Invalid(errors));
        }
        let rules = self
            .rules
            .iter()
            .map(|d| compile_rule(d).expect("validated rule compiles"))
            .collect();
        Ok(RulePack {
            name: self.name.clone(),
            version: self.version.clone(),
            rules,
        })
    }
}

/// Compiled, validated rule collection. Immutable once built.
#[derive(Debug, Clone)]
pub struct RulePack {
    pub name: String,
    pub version: String,
    pub rules: Vec<Rule>,
}

impl RulePack {
    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Combines two packs; a rule id present in both is an error.
    pub fn merge(self, other: RulePack) -> Result<RulePack, RuleError> {
        let ids: HashSet<&str> = self.rules.iter().map(|r| r.id.as_str()).collect();
        if let Some(dup) = other.rules.iter().find(|r| ids.contains(r.id.as_str())) {
            return Err(RuleError::DuplicateAcrossPacks {
                id: dup.id.clone(),
                first: self.name.clone(),
                second: other.name.clone(),
            });
        }
        let mut rules = self.rules;
        rules.extend(other.rules);
        Ok(RulePack {
            name: format!("{}+{}", self.name, other.name),
            version: format!("{}+{}", self.version, other.version),
            rules,
        })
    }

    pub fn to_def(&self) -> RulePackDef {
        RulePackDef {
            name: self.name.clone(),
            version: self.version.clone(),
            rules: self.rules.iter().map(Rule::to_def).collect(),
            lines: Vec::new(),
        }
    }

    pub fn to_toml(&self) -> String {
        self.to_def().to_toml()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticLevel {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub level: DiagnosticLevel,
    pub rule_id: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.level {
            DiagnosticLevel::Error => "error",
            DiagnosticLevel::Warning => "warning",
        };
        match self.line {
            Some(line) => write!(
                f,
                "{level}: line {line}: rule `{}`: {}",
                self.rule_id, self.message
            ),
            None => write!(f, "{level}: rule `{}`: {}", self.rule_id, self.message),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("cannot read rule file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rule file parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("rule id `{id}` is defined by both {first} and {second}")]
    DuplicateAcrossPacks {
        id: String,
        first: String,
        second: String,
    },
}

/// The built-in pack covering memory-safety, credential-handling,
/// injection and code-hygiene classes.
pub fn builtin_rules() -> RulePack {
    builtin_def()
        .compile(&LanguageRegistry::builtin())
        .expect("built-in rule pack is valid")
}

pub fn builtin_def() -> RulePackDef {
    RulePackDef::parse(BUILTIN_TOML).expect("built-in rule pack parses")
}

/// Reads, validates and compiles a rule file against the built-in
/// language registry.
pub fn load_rulepack(path: &Path) -> Result<RulePack, RuleError> {
    load_rulepack_with(path, &LanguageRegistry::builtin())
}

pub fn load_rulepack_with(path: &Path, registry: &LanguageRegistry) -> Result<RulePack, RuleError> {
    let text = fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut def = RulePackDef::parse(&text)?;
    if def.name.is_empty() {
        def.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
    }
    if def.version.is_empty() {
        def.version = "0".into();
    }
    def.compile(registry)
}

/// Checks every rule invariant. Returns no diagnostics for a valid pack.
pub fn validate_pack(pack: &RulePackDef) -> Vec<Diagnostic> {
    validate_pack_with(pack, &LanguageRegistry::builtin())
}

pub fn validate_pack_with(pack: &RulePackDef, registry: &LanguageRegistry) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, rule) in pack.rules.iter().enumerate() {
        let line = pack.lines.get(idx).copied().flatten();
        let mut push = |level, message: String| {
            out.push(Diagnostic {
                level,
                rule_id: rule.id.clone(),
                line,
                message,
            })
        };
        if rule.id.trim().is_empty() {
            push(DiagnosticLevel::Error, "missing id".into());
        } else if !seen.insert(rule.id.as_str()) {
            push(
                DiagnosticLevel::Error,
                format!("duplicate rule id `{}`", rule.id),
            );
        }
        if rule.title.trim().is_empty() {
            push(DiagnosticLevel::Error, "missing title".into());
        }
        if rule.severity.trim().is_empty() {
            push(DiagnosticLevel::Error, "missing severity".into());
        } else if let Err(e) = rule.severity.parse::<Severity>() {
            push(DiagnosticLevel::Error, e.to_string());
        }
        if let Err(message) = compile_matcher(rule) {
            push(DiagnosticLevel::Error, message);
        }
        for lang in &rule.languages {
            if lang != "any" && lang != UNKNOWN_LANGUAGE && !registry.is_registered(lang) {
                push(
                    DiagnosticLevel::Warning,
                    format!("language `{lang}` is not registered"),
                );
            }
        }
    }
    out
}

fn compile_rule(def: &RuleDef) -> Result<Rule, String> {
    let severity = def
        .severity
        .parse::<Severity>()
        .map_err(|e| e.to_string())?;
    let languages = if def.languages.iter().any(|l| l == "any") {
        Vec::new()
    } else {
        def.languages.clone()
    };
    Ok(Rule {
        id: def.id.clone(),
        title: def.title.clone(),
        description: def.description.clone(),
        severity,
        languages,
        matcher: compile_matcher(def)?,
        remediation: def.remediation.clone(),
    })
}

fn compile_matcher(def: &RuleDef) -> Result<Matcher, String> {
    match def.matcher.as_str() {
        "pattern" => {
            let regex = compile_regex("pattern", def.pattern.as_deref())?;
            let scope = match def.scope.as_deref() {
                None | Some("line") => MatchScope::Line,
                Some("comments") => MatchScope::Comments,
                Some(other) => {
                    return Err(format!(
                        "unknown scope `{other}` (expected line or comments)"
                    ))
                }
            };
            Ok(Matcher::Pattern { regex, scope })
        }
        "paired_resource" => {
            let alloc = compile_regex("alloc_pattern", def.alloc_pattern.as_deref())?;
            let release = compile_regex("release_pattern", def.release_pattern.as_deref())?;
            for (key, re) in [("alloc_pattern", &alloc), ("release_pattern", &release)] {
                if !re.capture_names().any(|n| n == Some("var")) {
                    return Err(format!("{key} needs a named group `(?P<var>...)`"));
                }
            }
            let check = match def.check.as_deref() {
                None | Some("missing_release") => PairCheck::MissingRelease,
                Some("double_release") => PairCheck::DoubleRelease,
                Some(other) => {
                    return Err(format!(
                        "unknown check `{other}` (expected missing_release or double_release)"
                    ))
                }
            };
            Ok(Matcher::PairedResource {
                alloc,
                release,
                check,
            })
        }
        "config_check" => {
            let regex = compile_regex("pattern", def.pattern.as_deref())?;
            let file_patterns: Vec<String> = if def.files.is_empty() {
                DEFAULT_CONFIG_FILES.iter().map(|s| s.to_string()).collect()
            } else {
                def.files.clone()
            };
            let files = crate::corpus::build_globset(&file_patterns).map_err(|e| e.to_string())?;
            Ok(Matcher::ConfigCheck {
                regex,
                files,
                file_patterns: def.files.clone(),
            })
        }
        "" => Err("missing matcher".into()),
        other => Err(format!(
            "unknown matcher `{other}` (expected pattern, paired_resource or config_check)"
        )),
    }
}

fn compile_regex(key: &str, pattern: Option<&str>) -> Result<Regex, String> {
    match pattern {
        None => Err(format!("missing {key}")),
        Some("") => Err(format!("empty {key}")),
        Some(p) => Regex::new(p).map_err(|e| format!("{key} does not compile: {e}")),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Locates the `id` key of each `[[rule]]` table by re-parsing with spans.
fn rule_id_lines(text: &str, count: usize) -> Vec<Option<usize>> {
    #[derive(Deserialize)]
    struct SpannedRule {
        id: Option<toml::Spanned<String>>,
    }
    #[derive(Deserialize)]
    struct SpannedPack {
        #[serde(default)]
        rule: Vec<SpannedRule>,
    }
    match toml::from_str::<SpannedPack>(text) {
        Ok(p) => p
            .rule
            .iter()
            .map(|r| r.id.as_ref().map(|s| line_of(text, s.span().start)))
            .collect(),
        Err(_) => vec![None; count],
    }
}

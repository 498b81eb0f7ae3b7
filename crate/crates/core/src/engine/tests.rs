use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::*;
use crate::corpus::ingest;
use crate::rulepack::{builtin_rules, RulePackDef};

fn write(root: &Path, rel: &str, body: &str) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, body).unwrap();
}

fn scan_dir(root: &Path, opts: &ScanOptions) -> ScanResult {
    let inv = ingest(root, &[], &[]).unwrap();
    scan(&inv, &builtin_rules(), opts)
}

fn ids(r: &ScanResult) -> Vec<(&str, &str, usize)> {
    r.findings
        .iter()
        .map(|f| (f.rule_id.as_str(), f.path.as_str(), f.line))
        .collect()
}

#[test]
fn memcpy_line() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "src/buf.cc",
        "void f(char *buffer, const char *str, size_t length) {\n    std::memcpy(buffer, str, length);\n}\n",
    );
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(r.findings.len(), 1);
    let f = &r.findings[0];
    assert_eq!(f.rule_id, "cpp.unsafe-memcpy");
    assert_eq!(f.severity, Severity::High);
    assert_eq!(f.snippet, "std::memcpy(buffer, str, length);");
    assert_eq!(f.line, 2);
    assert_eq!(f.title, "Unsafe Use of memcpy Allows Buffer Overflow");
}

#[test]
fn csharp_password_lines() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "a/Const.cs",
        "class C {\n    public const string R1ResetPassword = \"MYPASSWORD\";\n}\n",
    );
    write(
        dir.path(),
        "b/Login.cs",
        "class L {\n  void M() {\n    string strUserPassword = txtCurrentPassword.Text.ToUpper();\n  }\n}\n",
    );
    write(
        dir.path(),
        "c/Store.cs",
        "class S {\n  void M() {\n    String key = null;\n  }\n}\n",
    );
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(
        ids(&r),
        vec![
            ("cs.hardcoded-password", "a/Const.cs", 2),
            ("cs.case-insensitive-password", "b/Login.cs", 3),
            ("cs.insecure-sensitive-storage", "c/Store.cs", 3),
        ]
    );
    assert!(r.findings.iter().all(|f| f.severity == Severity::Medium));
}

#[test]
fn empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert!(r.findings.is_empty());
    assert!(r.warnings.is_empty());
    assert_eq!(r.summary.files, 0);
}

#[test]
fn suspicious_comment_only_in_comments() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "x.c",
        "int a; // TODO: hook in new backend\nchar *s = \"TODO in a string\";\n/* FIXME\n   later */\nint TODO_count;\n",
    );
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(
        ids(&r),
        vec![
            ("any.suspicious-comment", "x.c", 1),
            ("any.suspicious-comment", "x.c", 3)
        ]
    );
    assert!(r
        .findings
        .iter()
        .all(|f| f.severity == Severity::SuspiciousComment));
}

#[test]
fn non_comment_only_skips_commented_code() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "x.c",
        "// strcpy(a, b);\nstrcpy(a, b); // TODO\n",
    );
    let all = scan_dir(dir.path(), &ScanOptions::default());
    let strcpy_lines: Vec<usize> = all
        .findings
        .iter()
        .filter(|f| f.rule_id == "cpp.unsafe-strcpy")
        .map(|f| f.line)
        .collect();
    assert_eq!(strcpy_lines, vec![1, 2]);

    let opts = ScanOptions {
        non_comment_only: true,
        ..Default::default()
    };
    let code_only = scan_dir(dir.path(), &opts);
    assert_eq!(
        ids(&code_only),
        vec![
            ("cpp.unsafe-strcpy", "x.c", 2),
            ("any.suspicious-comment", "x.c", 2)
        ]
    );
}

#[test]
fn language_restrictions() {
    let dir = tempfile::tempdir().unwrap();
    // memcpy rule targets C/C++ only
    write(dir.path(), "Buf.java", "memcpy(a, b, n);\n");
    write(dir.path(), "buf.c", "memcpy(a, b, n);\n");
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(ids(&r), vec![("cpp.unsafe-memcpy", "buf.c", 1)]);

    let opts = ScanOptions {
        languages: Some(BTreeSet::from(["Java".to_string()])),
        ..Default::default()
    };
    assert!(scan_dir(dir.path(), &opts).findings.is_empty());
}

#[test]
fn severity_filter() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "x.c", "memcpy(a, b, n); // TODO\n");
    let opts = ScanOptions {
        severities: Some(BTreeSet::from([Severity::SuspiciousComment])),
        ..Default::default()
    };
    let r = scan_dir(dir.path(), &opts);
    assert_eq!(ids(&r), vec![("any.suspicious-comment", "x.c", 1)]);
}

#[test]
fn one_finding_per_rule_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "x.c",
        "memcpy(a, b, n); memcpy(c, d, n); strcpy(e, f);\n",
    );
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(
        ids(&r),
        vec![
            ("cpp.unsafe-memcpy", "x.c", 1),
            ("cpp.unsafe-strcpy", "x.c", 1)
        ]
    );
}

#[test]
fn config_check_matches_config_files_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "<configuration>\n  <system.web>\n    <compilation debug=\"true\" targetFramework=\"4.5\" />\n  </system.web>\n</configuration>\n";
    write(dir.path(), "web/Web.config", cfg);
    write(dir.path(), "web/notes.txt", cfg);
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(ids(&r), vec![("cs.debug-enabled", "web/Web.config", 3)]);
    assert!(r.findings[0].title.contains(".NET Debugging Enabled"));
}

#[test]
fn paired_resource_findings() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "leak.c",
        "#include <stdlib.h>\nvoid f(size_t n) {\n    char *p = malloc(n);\n    p[0] = 1;\n}\n",
    );
    write(
        dir.path(),
        "twice.c",
        "void g(char *p) {\n    free(p);\n    free(p);\n}\n",
    );
    write(
        dir.path(),
        "ok.c",
        "void h(size_t n) {\n    char *p = malloc(n);\n    free(p);\n}\n",
    );
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(
        ids(&r),
        vec![
            ("c.malloc-no-free", "leak.c", 3),
            ("c.double-free", "twice.c", 3)
        ]
    );
    assert!(r.findings[0].description.contains("`p`"));
}

#[test]
fn findings_sorted_canonically() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "b.c", "// TODO\nmemcpy(a, b, n);\n");
    write(dir.path(), "a.c", "// XXX\nstrcpy(a, b);\n");
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(
        ids(&r),
        vec![
            ("cpp.unsafe-strcpy", "a.c", 2),
            ("cpp.unsafe-memcpy", "b.c", 2),
            ("any.suspicious-comment", "a.c", 1),
            ("any.suspicious-comment", "b.c", 1),
        ]
    );
}

#[test]
fn line_shift_preserves_fingerprints() {
    let dir = tempfile::tempdir().unwrap();
    let body = "void f() {\n  memcpy(a, b, n);\n  memcpy(a, b, n);\n}\n";
    write(dir.path(), "x.c", body);
    let before = scan_dir(dir.path(), &ScanOptions::default());
    write(dir.path(), "x.c", &format!("\n\n\n{body}"));
    let after = scan_dir(dir.path(), &ScanOptions::default());
    let fps = |r: &ScanResult| {
        r.findings
            .iter()
            .map(|f| f.fingerprint.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(fps(&before), fps(&after));
    assert_eq!(before.findings[0].occurrence_index, 0);
    assert_eq!(before.findings[1].occurrence_index, 1);
    assert_ne!(
        before.findings[0].fingerprint,
        before.findings[1].fingerprint
    );
    assert_eq!(after.findings[0].line, before.findings[0].line + 3);
}

#[test]
fn deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..40 {
        write(
            dir.path(),
            &format!("d{}/f{i}.c", i % 5),
            &format!("// TODO {i}\nvoid f{i}() {{\n  memcpy(a, b, {i});\n  p = malloc({i});\n}}\n"),
        );
    }
    let inv = ingest(dir.path(), &[], &[]).unwrap();
    let pack = builtin_rules();
    let one = scan(
        &inv,
        &pack,
        &ScanOptions {
            threads: Some(1),
            ..Default::default()
        },
    );
    let many = scan(
        &inv,
        &pack,
        &ScanOptions {
            threads: Some(8),
            ..Default::default()
        },
    );
    assert_eq!(one.findings, many.findings);
    assert_eq!(one.warnings, many.warnings);
    assert_eq!(one.findings.len(), 120);
}

#[test]
fn snippets_match_disk_and_lines_in_range() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "x.cs",
        "class A {\r\n  void M() { lock (o) { } }\r\n  // HACK\r\n}\r\n",
    );
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(r.findings.len(), 2);
    for f in &r.findings {
        let content = fs::read_to_string(dir.path().join(&f.path)).unwrap();
        let line = content.lines().nth(f.line - 1).unwrap();
        assert_eq!(f.snippet, line.trim());
        assert!(f.line as u64 <= r.file(&f.path).unwrap().physical_lines);
    }
}

#[test]
fn changed_and_deleted_files_become_warnings() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.c", "int a;\n");
    write(dir.path(), "b.c", "int b;\n");
    let inv = ingest(dir.path(), &[], &[]).unwrap();
    write(dir.path(), "a.c", "memcpy(x, y, n);\n");
    fs::remove_file(dir.path().join("b.c")).unwrap();
    let r = scan(&inv, &builtin_rules(), &ScanOptions::default());
    assert_eq!(r.warnings.len(), 2);
    assert!(r.warnings[0].contains("changed since ingest"));
    assert!(r.warnings[1].contains("unreadable"));
    assert_eq!(r.findings.len(), 1);
}

#[test]
fn unterminated_comment_warning() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "x.c", "int a;\n/* never closed\n");
    let r = scan_dir(dir.path(), &ScanOptions::default());
    assert_eq!(r.warnings.len(), 1);
    assert!(r.warnings[0].contains("unterminated"));
}

/// Naive reference: test each pattern rule against each line on its own.
fn naive_pattern_hits(
    root: &Path,
    inv: &CorpusInventory,
    pack: &RulePack,
) -> BTreeSet<(String, String, usize)> {
    let mut out = BTreeSet::new();
    for file in &inv.files {
        let content = fs::read_to_string(root.join(&file.path)).unwrap();
        for rule in &pack.rules {
            let Matcher::Pattern {
                regex,
                scope: MatchScope::Line,
            } = &rule.matcher
            else {
                continue;
            };
            if !rule.languages.is_empty() && !rule.languages.contains(&file.language) {
                continue;
            }
            for (i, line) in content.lines().enumerate() {
                if regex.is_match(line) {
                    out.insert((rule.id.clone(), file.path.clone(), i + 1));
                }
            }
        }
    }
    out
}

#[test]
fn pattern_rules_agree_with_naive_matcher() {
    let dir = tempfile::tempdir().unwrap();
    let lines = [
        "std::memcpy(buffer, str, length);",
        "strcpy(dst, src); strcat(dst, src);",
        "sprintf(buf, \"%s\", s);",
        "gets(line);",
        "public const string R1ResetPassword = \"MYPASSWORD\";",
        "string strUserPassword = txtCurrentPassword.Text.ToUpper();",
        "String key = null;",
        "Response.Write(Request[\"q\"]);",
        "lock (sync) {",
        "doc.LoadXml(text);",
        "if (File.Exists(path)) {",
        "var req = WebRequest.Create(target);",
        "EXEC(@sql)",
        "int ordinary = 1;",
    ];
    let body: String = lines.iter().map(|l| format!("{l}\n")).collect();
    for ext in ["c", "cc", "cs", "java", "sql", "txt"] {
        write(dir.path(), &format!("f.{ext}"), &body);
    }
    let inv = ingest(dir.path(), &[], &[]).unwrap();
    let pack = builtin_rules();
    let r = scan(&inv, &pack, &ScanOptions::default());
    let line_rule_ids: BTreeSet<&str> = pack
        .rules
        .iter()
        .filter(|r| {
            matches!(
                r.matcher,
                Matcher::Pattern {
                    scope: MatchScope::Line,
                    ..
                }
            )
        })
        .map(|r| r.id.as_str())
        .collect();
    let engine: BTreeSet<(String, String, usize)> = r
        .findings
        .iter()
        .filter(|f| line_rule_ids.contains(f.rule_id.as_str()))
        .map(|f| (f.rule_id.clone(), f.path.clone(), f.line))
        .collect();
    let naive = naive_pattern_hits(dir.path(), &inv, &pack);
    assert_eq!(engine, naive);
    // every line pattern rule fires at least once on this fixture
    let fired: BTreeSet<&str> = engine.iter().map(|(id, _, _)| id.as_str()).collect();
    assert_eq!(fired, line_rule_ids);
}

#[test]
fn adding_a_rule_never_removes_findings() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "x.c",
        "memcpy(a, b, n);\n// TODO\nvoid f() { p = malloc(1); }\n",
    );
    let inv = ingest(dir.path(), &[], &[]).unwrap();
    let base = scan(&inv, &builtin_rules(), &ScanOptions::default());
    let extra = RulePackDef::parse(
        "name = \"extra\"\nversion = \"1\"\n[[rule]]\nid = \"x.any-call\"\ntitle = \"Call\"\nseverity = \"low\"\nmatcher = \"pattern\"\npattern = '\\w+\\('\n",
    )
    .unwrap()
    .compile(&LanguageRegistry::builtin())
    .unwrap();
    let bigger = scan(
        &inv,
        &builtin_rules().merge(extra).unwrap(),
        &ScanOptions::default(),
    );
    for f in &base.findings {
        assert!(bigger.findings.contains(f), "lost {f:?}");
    }
    assert!(bigger.findings.len() > base.findings.len());
}

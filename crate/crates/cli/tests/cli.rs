use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;
use vscan_testkit::write_file;

fn vscan_cmd(cwd: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vscan"));
    c.current_dir(cwd).env_remove("VSCAN_OUT_DIR");
    c
}

fn run(cwd: &Path, args: &[&str]) -> (i32, String, String) {
    let out: Output = vscan_cmd(cwd).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn project() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_file(
        dir.path(),
        "src/native/copy.cpp",
        "void f() {\n    std::memcpy(buffer, str, length);\n}\n",
    )
    .unwrap();
    write_file(
        dir.path(),
        "src/app/Login.cs",
        "class L {\n    string password = \"x\";\n    // TODO remove\n}\n",
    )
    .unwrap();
    write_file(
        dir.path(),
        "src/vendor/lib.c",
        "void g() { strcpy(a, b); }\n",
    )
    .unwrap();
    dir
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn finding_count(p: &Path) -> usize {
    read_json(p)["findings"].as_array().unwrap().len()
}

#[test]
fn scan_writes_outputs_and_summary() {
    let d = project();
    let (code, out, _) = run(d.path(), &["scan", "src", "--out", "o", "--csv", "--html"]);
    assert_eq!(code, 0);
    assert!(out.contains("Files:      3"));
    assert!(out.contains("Density (NCLOC):"));
    let n = finding_count(&d.path().join("o/scan.json"));
    assert_eq!(n, 4);
    let csv = std::fs::read_to_string(d.path().join("o/findings.csv")).unwrap();
    assert_eq!(csv.lines().count(), n + 1);
    let html = std::fs::read_to_string(d.path().join("o/report.html")).unwrap();
    assert_eq!(html.matches("<tr class=\"finding\">").count(), n);
}

#[test]
fn exit_codes() {
    let d = project();
    assert_eq!(run(d.path(), &["scan", "missing-dir"]).0, 1);
    assert_eq!(run(d.path(), &["scan"]).0, 64);
    assert_eq!(run(d.path(), &["scan", "src", "--bogus-flag"]).0, 64);
    assert_eq!(
        run(d.path(), &["scan", "src", "--fail-level", "severe"]).0,
        64
    );
    assert_eq!(run(d.path(), &["--help"]).0, 0);
    assert_eq!(run(d.path(), &["--version"]).0, 0);
    assert_eq!(
        run(d.path(), &["triage", "set", "abc", "bogus_state"]).0,
        64
    );
    assert_eq!(run(d.path(), &["scan", "src", "--no-builtin"]).0, 64);
    assert_eq!(run(d.path(), &["scan", "src", "--lang", "noequals"]).0, 64);
    assert_eq!(
        run(d.path(), &["scan", "src", "--fail-level", "critical", "-q"]).0,
        0
    );
    assert_eq!(
        run(d.path(), &["scan", "src", "--fail-level", "high", "-q"]).0,
        2
    );
}

#[test]
fn output_dir_precedence() {
    let d = project();
    write_file(d.path(), "vscan.toml", "out = \"from-config\"\n").unwrap();
    let (code, ..) = run(d.path(), &["--config", "vscan.toml", "scan", "src", "-q"]);
    assert_eq!(code, 0);
    assert!(d.path().join("from-config/scan.json").exists());

    let out = vscan_cmd(d.path())
        .args(["--config", "vscan.toml", "scan", "src", "-q"])
        .env("VSCAN_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.path().join("from-env/scan.json").exists());

    let out = vscan_cmd(d.path())
        .args([
            "--config",
            "vscan.toml",
            "scan",
            "src",
            "-q",
            "--out",
            "from-flag",
        ])
        .env("VSCAN_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.path().join("from-flag/scan.json").exists());

    run(d.path(), &["scan", "src", "-q"]);
    assert!(d.path().join("vscan-out/scan.json").exists());
}

#[test]
fn config_values_and_flag_override() {
    let d = project();
    write_file(
        d.path(),
        "vscan.toml",
        "exclude = [\"vendor/**\"]\nfail_level = \"high\"\ndensity = \"loc\"\nout = \"o\"\n",
    )
    .unwrap();
    let (code, out, _) = run(d.path(), &["--config", "vscan.toml", "scan", "src"]);
    assert_eq!(code, 2, "config fail_level applies");
    assert!(out.contains("Density (LOC):"));
    assert_eq!(finding_count(&d.path().join("o/scan.json")), 3);

    let (code, out, _) = run(
        d.path(),
        &[
            "--config",
            "vscan.toml",
            "scan",
            "src",
            "--fail-level",
            "critical",
            "--density",
            "ncloc",
            "--exclude",
            "app/**",
        ],
    );
    assert_eq!(code, 0, "flag fail_level wins");
    assert!(out.contains("Density (NCLOC):"));
    assert_eq!(finding_count(&d.path().join("o/scan.json")), 2);

    write_file(d.path(), "bad.toml", "colour = \"red\"\n").unwrap();
    assert_eq!(run(d.path(), &["--config", "bad.toml", "scan", "src"]).0, 1);
    assert_eq!(
        run(d.path(), &["--config", "absent.toml", "scan", "src"]).0,
        1
    );
}

#[test]
fn language_override_flag() {
    let d = tempfile::tempdir().unwrap();
    write_file(d.path(), "src/x.inc", "memcpy(a, b, n);\n").unwrap();
    run(d.path(), &["scan", "src", "--out", "o", "-q"]);
    assert_eq!(finding_count(&d.path().join("o/scan.json")), 0);
    run(
        d.path(),
        &["scan", "src", "--out", "o", "-q", "--lang", "inc=C"],
    );
    let v = read_json(&d.path().join("o/scan.json"));
    assert_eq!(v["findings"][0]["rule_id"], "cpp.unsafe-memcpy");
    assert_eq!(v["files"][0]["language"], "C");
}

#[test]
fn baseline_and_diff_flow() {
    let d = project();
    run(d.path(), &["scan", "src", "--out", "o1", "-q"]);
    let (code, out, _) = run(
        d.path(),
        &[
            "baseline",
            "o1/scan.json",
            "--out",
            "base.json",
            "--label",
            "release-1",
        ],
    );
    assert_eq!(code, 0, "{out}");
    assert_eq!(
        run(
            d.path(),
            &[
                "baseline",
                "o1/scan.json",
                "--out",
                "base.json",
                "--label",
                "again"
            ]
        )
        .0,
        1
    );

    let (code, out, _) = run(
        d.path(),
        &["diff", "base.json", "o1/scan.json", "--fail-on-new"],
    );
    assert_eq!(code, 0);
    assert!(out.starts_with("0 new, 0 fixed, 4 persistent"), "{out}");

    // shift lines and add one new High finding
    write_file(
        d.path(),
        "src/native/copy.cpp",
        "// moved\n\nvoid f() {\n    std::memcpy(buffer, str, length);\n    gets(line);\n}\n",
    )
    .unwrap();
    run(d.path(), &["scan", "src", "--out", "o2", "-q"]);
    let (code, out, _) = run(
        d.path(),
        &["diff", "base.json", "o2/scan.json", "--fail-on-new", "-v"],
    );
    assert_eq!(code, 2);
    assert!(out.starts_with("1 new, 0 fixed, 4 persistent"), "{out}");
    assert!(out.contains("cpp.unsafe-gets"));
    let (code, out, _) = run(d.path(), &["diff", "base.json", "o2/scan.json"]);
    assert_eq!(code, 0, "{out}");

    let (_, json, _) = run(d.path(), &["diff", "base.json", "o2/scan.json", "--json"]);
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["new"].as_array().unwrap().len(), 1);
    assert_eq!(v["baseline_label"], "release-1");
    let new_fp = v["new"][0]["fingerprint"].as_str().unwrap().to_string();

    // suppressing the new finding clears the gate
    run(
        d.path(),
        &[
            "triage",
            "set",
            &new_fp,
            "accepted_risk",
            "--note",
            "legacy input",
        ],
    );
    assert_eq!(
        run(
            d.path(),
            &["diff", "base.json", "o2/scan.json", "--fail-on-new"]
        )
        .0,
        0
    );

    // scan can compare against the baseline directly
    let (code, out, _) = run(
        d.path(),
        &[
            "scan",
            "src",
            "--out",
            "o3",
            "--baseline",
            "base.json",
            "--html",
        ],
    );
    assert_eq!(code, 0);
    assert!(
        out.contains("Baseline:   1 new, 0 fixed, 4 persistent"),
        "{out}"
    );
    let html = std::fs::read_to_string(d.path().join("o3/report.html")).unwrap();
    assert!(html.contains("New: 1"));

    assert_eq!(run(d.path(), &["diff", "nope.json", "o2/scan.json"]).0, 1);
}

#[test]
fn diff_rejects_incompatible_fingerprints() {
    let d = project();
    run(d.path(), &["scan", "src", "--out", "o", "-q"]);
    let text = std::fs::read_to_string(d.path().join("o/scan.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["fingerprint_scheme"] = Value::String("other-scheme".into());
    std::fs::write(
        d.path().join("old.json"),
        serde_json::to_string_pretty(&v).unwrap(),
    )
    .unwrap();
    let (code, _, err) = run(d.path(), &["diff", "old.json", "o/scan.json"]);
    assert_eq!(code, 1);
    assert!(err.contains("not comparable"), "{err}");
}

#[test]
fn corrupt_baseline_rejected() {
    let d = project();
    run(d.path(), &["scan", "src", "--out", "o", "-q"]);
    run(
        d.path(),
        &["baseline", "o/scan.json", "--out", "b.json", "--label", "x"],
    );
    let full = std::fs::read(d.path().join("b.json")).unwrap();
    std::fs::write(d.path().join("b.json"), &full[..full.len() - 20]).unwrap();
    let (code, _, err) = run(d.path(), &["diff", "b.json", "o/scan.json"]);
    assert_eq!(code, 1);
    assert!(err.contains("checksum"), "{err}");
}

#[test]
fn triage_commands() {
    let d = project();
    run(d.path(), &["scan", "src", "--out", "o", "-q"]);
    let v = read_json(&d.path().join("o/scan.json"));
    let fp = v["findings"][0]["fingerprint"]
        .as_str()
        .unwrap()
        .to_string();

    let (code, out, err) = run(
        d.path(),
        &[
            "triage",
            "set",
            &fp,
            "false_positive",
            "--note",
            "dup",
            "--result",
            "o/scan.json",
        ],
    );
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("false_positive"));
    assert!(err.is_empty(), "{err}");
    assert!(d.path().join("vscan-triage.jsonl").exists());

    let (_, _, err) = run(
        d.path(),
        &[
            "triage",
            "set",
            "0000",
            "confirmed",
            "--result",
            "o/scan.json",
        ],
    );
    assert!(err.contains("not in"), "{err}");

    let (_, out, _) = run(d.path(), &["triage", "list", "--result", "o/scan.json"]);
    assert!(out.contains("4 total, 1 suppressed, 3 open"), "{out}");
    assert!(!out.contains(&fp));
    let (_, out, _) = run(
        d.path(),
        &[
            "triage",
            "list",
            "--result",
            "o/scan.json",
            "--state",
            "false_positive",
        ],
    );
    assert!(out.contains(&fp));

    let (code, csv, _) = run(
        d.path(),
        &[
            "triage",
            "export",
            "--format",
            "csv",
            "--result",
            "o/scan.json",
        ],
    );
    assert_eq!(code, 0);
    assert!(csv.starts_with("fingerprint,severity,rule_id,title,path,line,snippet,state\n"));
    assert_eq!(csv.lines().count(), 4);
    let (_, full, _) = run(
        d.path(),
        &["triage", "export", "--result", "o/scan.json", "--full"],
    );
    assert_eq!(full.lines().count(), 5);
    assert!(full.contains("false_positive"));
    let (_, json, _) = run(
        d.path(),
        &[
            "triage",
            "export",
            "--format",
            "json",
            "--full",
            "--result",
            "o/scan.json",
        ],
    );
    let j: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(j["suppressed"], 1);
    assert_eq!(j["entries"].as_array().unwrap().len(), 4);

    run(d.path(), &["triage", "set", &fp, "remediated"]);
    assert_eq!(run(d.path(), &["triage", "set", &fp, "confirmed"]).0, 1);
    assert_eq!(
        run(
            d.path(),
            &["triage", "set", &fp, "confirmed", "--note", "came back"]
        )
        .0,
        0
    );
    let (_, hist, _) = run(d.path(), &["triage", "history", &fp]);
    assert_eq!(hist.lines().count(), 3);

    let (code, ..) = run(
        d.path(),
        &["triage", "--store", "other.jsonl", "set", &fp, "confirmed"],
    );
    assert_eq!(code, 0);
    assert!(d.path().join("other.jsonl").exists());
}

#[test]
fn triage_survives_line_shift_rescan() {
    let d = project();
    run(d.path(), &["scan", "src", "--out", "o", "-q", "--csv"]);
    let csv = std::fs::read_to_string(d.path().join("o/findings.csv")).unwrap();
    let fp = csv
        .lines()
        .find(|l| l.contains("memcpy"))
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .to_string();
    run(d.path(), &["triage", "set", &fp, "false_positive"]);
    write_file(
        d.path(),
        "src/native/copy.cpp",
        "\n\n// header\nvoid f() {\n    std::memcpy(buffer, str, length);\n}\n",
    )
    .unwrap();
    let (code, out, _) = run(
        d.path(),
        &["scan", "src", "--out", "o", "--fail-level", "high"],
    );
    assert_eq!(code, 2, "strcpy in vendor is still open");
    assert!(out.contains("1 suppressed"), "{out}");
    let (_, out, _) = run(
        d.path(),
        &[
            "triage",
            "list",
            "--result",
            "o/scan.json",
            "--state",
            "false_positive",
        ],
    );
    assert!(out.contains(&fp));
}

#[test]
fn rules_commands() {
    let d = tempfile::tempdir().unwrap();
    let (code, out, _) = run(d.path(), &["rules", "list"]);
    assert_eq!(code, 0);
    assert!(out.contains("cpp.unsafe-memcpy"));
    let (_, toml, _) = run(d.path(), &["rules", "builtin"]);
    std::fs::write(d.path().join("copy.toml"), toml).unwrap();
    assert_eq!(run(d.path(), &["rules", "validate", "copy.toml"]).0, 0);
    write_file(
        d.path(),
        "bad.toml",
        "[[rule]]\nid = \"x\"\ntitle = \"t\"\nseverity = \"high\"\nmatcher = \"pattern\"\npattern = \"(\"\n",
    )
    .unwrap();
    let (code, out, _) = run(d.path(), &["rules", "validate", "bad.toml"]);
    assert_eq!(code, 1);
    assert!(out.contains("line 1") || out.contains("line 2"), "{out}");
    assert_eq!(
        run(d.path(), &["rules", "list", "--rules", "copy.toml"]).0,
        1,
        "duplicate ids across packs"
    );
}

#[test]
fn acquire_without_git_is_not_an_error() {
    let d = tempfile::tempdir().unwrap();
    let out = vscan_cmd(d.path())
        .args(["acquire", "https://example.invalid/repo.git", "dest"])
        .env("PATH", d.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("git is not installed"));
}

#[test]
fn acquire_clones_local_repo() {
    let d = tempfile::tempdir().unwrap();
    let git = |args: &[&str]| {
        Command::new("git")
            .args(args)
            .current_dir(d.path())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
    };
    if git(&["--version"]).is_err() {
        eprintln!("git unavailable; skipping clone check");
        return;
    }
    write_file(d.path(), "upstream/a.c", "int x;\n").unwrap();
    assert!(git(&["-C", "upstream", "init", "-q"]).unwrap().success());
    git(&["-C", "upstream", "add", "."]).unwrap();
    assert!(git(&[
        "-C",
        "upstream",
        "-c",
        "user.email=a@b",
        "-c",
        "user.name=a",
        "commit",
        "-q",
        "-m",
        "init"
    ])
    .unwrap()
    .success());
    let (code, _, err) = run(d.path(), &["acquire", "upstream", "copy"]);
    assert_eq!(code, 0, "{err}");
    assert!(d.path().join("copy/a.c").exists());
    assert_eq!(run(d.path(), &["acquire", "no-such-repo", "copy2"]).0, 1);
}

#[test]
fn serve_missing_result_and_busy_port() {
    let d = project();
    assert_eq!(run(d.path(), &["serve", "--result", "absent.json"]).0, 1);
    run(d.path(), &["scan", "src", "--out", "o", "-q"]);
    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let (code, _, err) = run(
        d.path(),
        &["serve", "--result", "o/scan.json", "--port", &port],
    );
    assert_eq!(code, 1);
    assert!(err.contains("binding"), "{err}");
}

#[cfg(unix)]
#[test]
fn serve_answers_and_stops_on_sigterm() {
    use std::io::{BufRead, BufReader, Read, Write};
    let d = project();
    run(d.path(), &["scan", "src", "--out", "o", "-q"]);
    let port = {
        let probe = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        probe.local_addr().unwrap().port()
    };
    let mut child = vscan_cmd(d.path())
        .args([
            "serve",
            "--result",
            "o/scan.json",
            "--port",
            &port.to_string(),
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    assert!(first.contains(&format!("127.0.0.1:{port}")), "{first}");

    let mut stream = std::net::TcpStream::connect(("127.0.0.1", port)).unwrap();
    stream
        .set_read_timeout(Some(Duration::from_secs(10)))
        .unwrap();
    stream
        .write_all(b"GET /api/result HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"schema\":1"));

    let status = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    let exit = child.wait().unwrap();
    assert_eq!(exit.code(), Some(0));
    let rest: Vec<String> = lines.map_while(Result::ok).collect();
    assert!(
        rest.iter().any(|l| l.contains("Server stopped")),
        "{rest:?}"
    );
}

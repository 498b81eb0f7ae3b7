use std::fs;
use std::io::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use vscan_core::baseline::{diff_results, load_baseline, save_baseline, BaselineError, DiffResult};
use vscan_core::corpus::{ingest_with, IngestOptions};
use vscan_core::metrics::compute_for;
use vscan_core::report::{
    parse_structured, render_csv, render_html, render_structured, render_structured_diff,
    render_summary,
};
use vscan_core::rulepack::{
    builtin_def, builtin_rules, load_rulepack_with, validate_pack_with, DiagnosticLevel,
    RulePackDef,
};
use vscan_core::triage::{
    apply_triage, backlog_rows, export_backlog, unknown_fingerprints, TriageStore, WorkingView,
};
use vscan_core::{scan, Finding, LanguageRegistry, RulePack, ScanOptions, ScanResult};
use vscan_serve::{ServeConfig, DEFAULT_PORT};

use crate::config::Config;
use crate::{
    AcquireArgs, BaselineArgs, Cli, Command, DiffArgs, RuleSource, RulesAction, ScanArgs,
    ServeArgs, TriageAction, TriageArgs, EXIT_GATE, EXIT_OK,
};

/// Invalid combination of otherwise well-formed arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

pub fn run(cli: Cli) -> Result<u8> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Scan(args) => cmd_scan(&cfg, args),
        Command::Diff(args) => cmd_diff(&cfg, args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Triage(args) => cmd_triage(&cfg, args),
        Command::Serve(args) => cmd_serve(&cfg, args),
        Command::Acquire(args) => cmd_acquire(args),
        Command::Rules(args) => cmd_rules(&cfg, args.action),
    }
}

fn registry(cfg: &Config, flags: &[String]) -> Result<LanguageRegistry> {
    let mut reg = LanguageRegistry::builtin();
    for (ext, lang) in &cfg.language_overrides {
        reg.override_extension(ext, lang)
            .with_context(|| format!("config language override `{ext}`"))?;
    }
    for spec in flags {
        let (ext, lang) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--lang expects EXT=LANGUAGE, got `{spec}`")))?;
        reg.override_extension(ext.trim_start_matches('.'), lang)
            .map_err(|e| usage(format!("--lang {spec}: {e}")))?;
    }
    Ok(reg)
}

fn rule_pack(cfg: &Config, source: &RuleSource, reg: &LanguageRegistry) -> Result<RulePack> {
    let files: Vec<&PathBuf> = cfg.rules.iter().chain(&source.rules).collect();
    let mut pack: Option<RulePack> = if source.no_builtin || cfg.no_builtin {
        None
    } else {
        Some(builtin_rules())
    };
    for file in files {
        let loaded = load_rulepack_with(file, reg)
            .with_context(|| format!("loading rules from {}", file.display()))?;
        pack = Some(match pack {
            None => loaded,
            Some(p) => p.merge(loaded)?,
        });
    }
    pack.ok_or_else(|| usage("no rules to run: --no-builtin given without any --rules file"))
}

fn open_store(path: &Path) -> Result<TriageStore> {
    TriageStore::open(path).with_context(|| format!("opening triage store {}", path.display()))
}

fn read_result(path: &Path) -> Result<ScanResult> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scan result {}", path.display()))?;
    parse_structured(&text).with_context(|| format!("{} is not a scan result", path.display()))
}

/// Accepts a baseline file or a plain scan result.
fn read_baseline_or_result(path: &Path) -> Result<(String, ScanResult)> {
    match load_baseline(path) {
        Ok(b) => Ok((b.header.label, b.result)),
        Err(BaselineError::BadHeader(_)) => Ok((path.display().to_string(), read_result(path)?)),
        Err(e) => Err(e.into()),
    }
}

fn write_output(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn new_open(diff: &DiffResult, view: &WorkingView) -> usize {
    diff.new
        .iter()
        .filter(|f| {
            !view
                .entries
                .iter()
                .any(|e| e.suppressed && e.finding.fingerprint == f.fingerprint)
        })
        .count()
}

fn cmd_scan(cfg: &Config, args: ScanArgs) -> Result<u8> {
    let reg = registry(cfg, &args.language_overrides)?;
    let pack = rule_pack(cfg, &args.rule_source, &reg)?;
    let pick = |flag: &Vec<String>, conf: &Vec<String>| {
        if flag.is_empty() {
            conf.clone()
        } else {
            flag.clone()
        }
    };
    let inventory = ingest_with(
        &args.root,
        &IngestOptions {
            include: pick(&args.include, &cfg.include),
            exclude: pick(&args.exclude, &cfg.exclude),
            registry: reg.clone(),
        },
    )?;
    let opts = ScanOptions {
        languages: args
            .languages
            .clone()
            .or_else(|| cfg.languages.clone())
            .map(|v| v.into_iter().collect()),
        severities: args.severity.clone().map(|v| v.into_iter().collect()),
        non_comment_only: args.non_comment_only || cfg.non_comment_only.unwrap_or(false),
        threads: args.threads.or(cfg.threads),
        registry: reg,
    };
    let result = scan(&inventory, &pack, &opts);

    let store = open_store(&cfg.triage_store(args.triage.as_deref()))?;
    let view = apply_triage(&result, &store);
    let kind = args.density.or(cfg.density_kind()?).unwrap_or_default();
    let open_only = args.density_open_only || cfg.density_open_only.unwrap_or(false);
    let metrics = if open_only {
        compute_for(&result, view.open_findings(), kind)
    } else {
        compute_for(&result, &result.findings, kind)
    };
    let diff = match &args.baseline {
        Some(path) => {
            let (label, base) = read_baseline_or_result(path)?;
            let mut d = diff_results(&base, &result)?;
            d.baseline_label = label;
            Some(d)
        }
        None => None,
    };

    let out = cfg.out_dir(args.out.as_deref());
    fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let mut written = vec![write_output(
        &out,
        "scan.json",
        &render_structured(&result),
    )?];
    if args.csv {
        written.push(write_output(
            &out,
            "findings.csv",
            &render_csv(&view.entries),
        )?);
    }
    if args.html {
        written.push(write_output(
            &out,
            "report.html",
            &render_html(&result, &metrics, diff.as_ref()),
        )?);
    }

    if !args.quiet {
        let mut stdout = std::io::stdout().lock();
        write!(stdout, "{}", render_summary(&result, &metrics))?;
        writeln!(
            stdout,
            "Triage:     {} total, {} suppressed, {} open",
            view.total, view.suppressed, view.open
        )?;
        if let Some(d) = &diff {
            writeln!(stdout, "Baseline:   {}", d.summary_line())?;
        }
        for w in &result.warnings {
            eprintln!("warning: {w}");
        }
        for p in &written {
            writeln!(stdout, "Wrote {}", p.display())?;
        }
    }

    let mut code = EXIT_OK;
    if let Some(level) = args.fail_level.or(cfg.fail_level()?) {
        let over: Vec<&Finding> = view
            .open_findings()
            .filter(|f| f.severity.at_or_above(level))
            .collect();
        if !over.is_empty() {
            eprintln!(
                "gate: {} open finding(s) at or above {}",
                over.len(),
                level.label()
            );
            code = EXIT_GATE;
        }
    }
    if let (true, Some(d)) = (args.fail_on_new, &diff) {
        let n = new_open(d, &view);
        if n > 0 {
            eprintln!("gate: {n} new open finding(s) since baseline");
            code = EXIT_GATE;
        }
    }
    Ok(code)
}

fn print_findings(label: &str, findings: &[Finding]) {
    for f in findings {
        println!(
            "  {label} {:<18} {}:{}  {}  {}",
            f.severity.label(),
            f.path,
            f.line,
            f.rule_id,
            f.fingerprint
        );
    }
}

fn cmd_diff(cfg: &Config, args: DiffArgs) -> Result<u8> {
    let (label, base) = read_baseline_or_result(&args.baseline)?;
    let current = read_result(&args.current)?;
    let mut d = diff_results(&base, &current)?;
    d.baseline_label = label;
    let store = open_store(&cfg.triage_store(args.triage.as_deref()))?;
    let view = apply_triage(&current, &store);
    if args.json {
        print!("{}", render_structured_diff(&d));
    } else {
        println!("{}", d.summary_line());
        if d.pack_changed {
            println!(
                "note: rule pack changed ({} -> {}); new findings may come from new rules",
                d.baseline_pack, d.current_pack
            );
        }
        for c in &d.severity_changes {
            println!(
                "  severity {} -> {}  {}",
                c.from.label(),
                c.to.label(),
                c.fingerprint
            );
        }
        if args.verbose {
            print_findings("new  ", &d.new);
            print_findings("fixed", &d.fixed);
        }
    }
    if args.fail_on_new {
        let n = new_open(&d, &view);
        if n > 0 {
            eprintln!("gate: {n} new open finding(s) since baseline");
            return Ok(EXIT_GATE);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_baseline(args: BaselineArgs) -> Result<u8> {
    let result = read_result(&args.result)?;
    let b = save_baseline(&result, &args.label, &args.out)?;
    println!(
        "Saved baseline `{}` ({} findings, {}) to {}",
        b.header.label,
        result.findings.len(),
        b.header.checksum,
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_triage(cfg: &Config, args: TriageArgs) -> Result<u8> {
    let store_path = cfg.triage_store(args.store.as_deref());
    match args.action {
        TriageAction::List { result, state, all } => {
            let result = read_result(&result)?;
            let store = open_store(&store_path)?;
            let view = apply_triage(&result, &store);
            for e in backlog_rows(&view, all || state.is_some()) {
                if state.is_some_and(|s| s != e.state) {
                    continue;
                }
                let f = &e.finding;
                println!(
                    "{}  {:<18} {:<15} {}:{}  {}",
                    f.fingerprint,
                    f.severity.label(),
                    e.state.as_str(),
                    f.path,
                    f.line,
                    f.title
                );
            }
            println!(
                "{} total, {} suppressed, {} open",
                view.total, view.suppressed, view.open
            );
        }
        TriageAction::Set {
            fingerprint,
            state,
            note,
            annotator,
            result,
        } => {
            let mut store = open_store(&store_path)?;
            if let Some(path) = result {
                if !TriageStore::is_known(&fingerprint, &read_result(&path)?) {
                    eprintln!(
                        "warning: fingerprint {fingerprint} is not in {}",
                        path.display()
                    );
                }
            }
            let annotator = annotator
                .or_else(|| std::env::var("USER").ok())
                .unwrap_or_default();
            let rec = store.set_state(&fingerprint, state, &note, &annotator)?;
            println!("{} -> {}", rec.fingerprint, rec.state);
        }
        TriageAction::Export {
            result,
            format,
            full,
            out,
        } => {
            let result = read_result(&result)?;
            let store = open_store(&store_path)?;
            for fp in unknown_fingerprints(&store, &result) {
                eprintln!("note: triage record {fp} matches no finding in this scan");
            }
            let body = export_backlog(&apply_triage(&result, &store), format, full);
            match out {
                Some(path) => {
                    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?
                }
                None => print!("{body}"),
            }
        }
        TriageAction::History { fingerprint } => {
            let store = open_store(&store_path)?;
            for r in store.history(&fingerprint) {
                println!(
                    "{}  {:<15} {}  {}",
                    r.updated_at.to_rfc3339(),
                    r.state.as_str(),
                    r.annotator,
                    r.note
                );
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_serve(cfg: &Config, args: ServeArgs) -> Result<u8> {
    // fail fast on a missing or malformed result instead of serving 500s
    let result = read_result(&args.result)?;
    let bind: IpAddr = args
        .bind
        .or_else(|| cfg.serve.bind.clone())
        .unwrap_or_else(|| "127.0.0.1".into())
        .parse()
        .map_err(|e| usage(format!("--bind: {e}")))?;
    let port = args.port.or(cfg.serve.port).unwrap_or(DEFAULT_PORT);
    let mut sc = ServeConfig::new(&args.result, cfg.triage_store(args.triage.as_deref()));
    sc.addr = SocketAddr::new(bind, port);
    sc.ui_dir = args.ui.or_else(|| cfg.serve.ui.clone());
    sc.source_root = args.source_root;
    sc.density_kind = args.density.or(cfg.density_kind()?).unwrap_or_default();
    sc.density_open_only = args.density_open_only || cfg.density_open_only.unwrap_or(false);
    if !bind.is_loopback() {
        eprintln!("warning: serving on non-loopback address {bind}; the API has no authentication");
    }
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(sc.addr)
            .await
            .with_context(|| format!("binding {}", sc.addr))?;
        let addr = listener.local_addr()?;
        println!(
            "Serving {} ({} findings) on http://{addr}/",
            args.result.display(),
            result.findings.len()
        );
        vscan_serve::serve_on(listener, sc, shutdown_signal()).await?;
        println!("Server stopped");
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(EXIT_OK)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn cmd_acquire(args: AcquireArgs) -> Result<u8> {
    let git = |argv: &[&str]| std::process::Command::new("git").args(argv).status();
    let dest = args.dest.to_string_lossy().into_owned();
    match git(&["clone", "--quiet", &args.source, &dest]) {
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            println!(
                "git is not installed; copy the code into {} by other means and run `vscan scan` on it",
                args.dest.display()
            );
            return Ok(EXIT_OK);
        }
        Err(e) => return Err(anyhow!(e).context("running git")),
        Ok(status) if !status.success() => bail!("git clone of {} failed ({status})", args.source),
        Ok(_) => {}
    }
    if let Some(rev) = &args.rev {
        let status = git(&["-C", &dest, "checkout", "--quiet", rev]).context("running git")?;
        if !status.success() {
            bail!("git checkout {rev} failed ({status})");
        }
    }
    println!("Acquired {} into {}", args.source, args.dest.display());
    Ok(EXIT_OK)
}

fn cmd_rules(cfg: &Config, action: RulesAction) -> Result<u8> {
    let reg = registry(cfg, &[])?;
    match action {
        RulesAction::List { rule_source } => {
            let pack = rule_pack(cfg, &rule_source, &reg)?;
            println!(
                "{} {} ({} rules)",
                pack.name,
                pack.version,
                pack.rules.len()
            );
            for r in &pack.rules {
                let langs = if r.languages.is_empty() {
                    "any".to_string()
                } else {
                    r.languages.join(",")
                };
                println!(
                    "  {:<34} {:<18} {:<12} {}",
                    r.id,
                    r.severity.label(),
                    langs,
                    r.title
                );
            }
            Ok(EXIT_OK)
        }
        RulesAction::Validate { files } => {
            let mut failed = false;
            for file in files {
                let text = fs::read_to_string(&file)
                    .with_context(|| format!("reading {}", file.display()))?;
                let diags = match RulePackDef::parse(&text) {
                    Ok(def) => validate_pack_with(&def, &reg),
                    Err(e) => {
                        println!("{}: {e}", file.display());
                        failed = true;
                        continue;
                    }
                };
                for d in &diags {
                    println!("{}: {d}", file.display());
                }
                let errors = diags
                    .iter()
                    .filter(|d| d.level == DiagnosticLevel::Error)
                    .count();
                failed |= errors > 0;
                if diags.is_empty() {
                    println!("{}: ok", file.display());
                }
            }
            if failed {
                bail!("rule validation failed");
            }
            Ok(EXIT_OK)
        }
        RulesAction::Builtin => {
            print!("{}", builtin_def().to_toml());
            Ok(EXIT_OK)
        }
    }
}

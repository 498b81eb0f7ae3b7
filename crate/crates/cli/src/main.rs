mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vscan_core::triage::{BacklogFormat, TriageState};
use vscan_core::{DensityKind, Severity};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_GATE: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

/// Lexical static security scanner for C, C++, C#, Java and SQL code.
#[derive(Debug, Parser)]
#[command(name = "vscan", version, about)]
pub struct Cli {
    /// Project configuration file (TOML). Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a source tree and write the results.
    Scan(ScanArgs),
    /// Compare a current scan against a baseline.
    Diff(DiffArgs),
    /// Save a scan result as a named baseline.
    Baseline(BaselineArgs),
    /// Review findings: list, set state, export a backlog.
    Triage(TriageArgs),
    /// Serve the HTTP API (and optional UI) for a scan result.
    Serve(ServeArgs),
    /// Fetch a codebase with git, when git is available.
    Acquire(AcquireArgs),
    /// Inspect and validate rule packs.
    Rules(RulesArgs),
}

#[derive(Debug, Args)]
pub struct RuleSource {
    /// Additional rule file; repeatable.
    #[arg(long = "rules", value_name = "FILE")]
    pub rules: Vec<PathBuf>,
    /// Do not load the built-in rules.
    #[arg(long)]
    pub no_builtin: bool,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Root of the source tree.
    pub root: PathBuf,
    /// Output directory [env: VSCAN_OUT_DIR] [default: vscan-out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub rule_source: RuleSource,
    /// Only scan files matching this glob; repeatable.
    #[arg(long, value_name = "GLOB")]
    pub include: Vec<String>,
    /// Skip files matching this glob; repeatable.
    #[arg(long, value_name = "GLOB")]
    pub exclude: Vec<String>,
    /// Map an extension to a language, e.g. `inc=C`; repeatable.
    #[arg(long = "lang", value_name = "EXT=LANGUAGE")]
    pub language_overrides: Vec<String>,
    /// Only scan these languages.
    #[arg(long, value_delimiter = ',', value_name = "LANGUAGE")]
    pub languages: Option<Vec<String>>,
    /// Only run rules of these severities.
    #[arg(long, value_delimiter = ',', value_name = "SEVERITY")]
    pub severity: Option<Vec<Severity>>,
    /// Skip comment-only lines for line rules.
    #[arg(long)]
    pub non_comment_only: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Density denominator: loc or ncloc.
    #[arg(long, value_name = "KIND")]
    pub density: Option<DensityKind>,
    /// Compute density over open (non-suppressed) findings only.
    #[arg(long)]
    pub density_open_only: bool,
    /// Exit 2 if an open finding at or above this severity exists.
    #[arg(long, value_name = "SEVERITY")]
    pub fail_level: Option<Severity>,
    /// Triage store used for suppression [default: vscan-triage.jsonl].
    #[arg(long, value_name = "FILE")]
    pub triage: Option<PathBuf>,
    /// Also write findings.csv.
    #[arg(long)]
    pub csv: bool,
    /// Also write report.html.
    #[arg(long)]
    pub html: bool,
    /// Compare against this baseline and include the changes in reports.
    #[arg(long, value_name = "FILE")]
    pub baseline: Option<PathBuf>,
    /// With --baseline: exit 2 if new open findings exist.
    #[arg(long, requires = "baseline")]
    pub fail_on_new: bool,
    /// Do not print the summary.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// Baseline file, or a plain scan result.
    pub baseline: PathBuf,
    /// Current scan result.
    pub current: PathBuf,
    /// Exit 2 if new open findings exist.
    #[arg(long)]
    pub fail_on_new: bool,
    /// Triage store used for suppression [default: vscan-triage.jsonl].
    #[arg(long, value_name = "FILE")]
    pub triage: Option<PathBuf>,
    /// Print the full diff as JSON instead of counts.
    #[arg(long)]
    pub json: bool,
    /// List each new and fixed finding.
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Scan result to save.
    pub result: PathBuf,
    /// Baseline file to create; never overwritten.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct TriageArgs {
    /// Triage store [default: vscan-triage.jsonl].
    #[arg(long, value_name = "FILE", global = true)]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub action: TriageAction,
}

#[derive(Debug, Subcommand)]
pub enum TriageAction {
    /// List findings of a scan with their triage state.
    List {
        /// Scan result.
        #[arg(long, value_name = "FILE")]
        result: PathBuf,
        /// Only findings in this state.
        #[arg(long)]
        state: Option<TriageState>,
        /// Include suppressed findings.
        #[arg(long)]
        all: bool,
    },
    /// Record a triage decision.
    Set {
        fingerprint: String,
        state: TriageState,
        #[arg(long, default_value = "")]
        note: String,
        /// Who made the decision [default: $USER].
        #[arg(long)]
        annotator: Option<String>,
        /// Scan result used to warn about unknown fingerprints.
        #[arg(long, value_name = "FILE")]
        result: Option<PathBuf>,
    },
    /// Export the prioritized backlog.
    Export {
        #[arg(long, value_name = "FILE")]
        result: PathBuf,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: BacklogFormat,
        /// Include suppressed findings.
        #[arg(long)]
        full: bool,
        /// Write here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Show every recorded decision for one fingerprint.
    History { fingerprint: String },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Scan result to serve.
    #[arg(long, value_name = "FILE")]
    pub result: PathBuf,
    #[arg(long)]
    pub port: Option<u16>,
    /// Bind address [default: 127.0.0.1].
    #[arg(long)]
    pub bind: Option<String>,
    /// Triage store [default: vscan-triage.jsonl].
    #[arg(long, value_name = "FILE")]
    pub triage: Option<PathBuf>,
    /// Directory of built UI assets.
    #[arg(long, value_name = "DIR")]
    pub ui: Option<PathBuf>,
    /// Read source excerpts from here instead of the scanned root.
    #[arg(long, value_name = "DIR")]
    pub source_root: Option<PathBuf>,
    #[arg(long, value_name = "KIND")]
    pub density: Option<DensityKind>,
    #[arg(long)]
    pub density_open_only: bool,
}

#[derive(Debug, Args)]
pub struct AcquireArgs {
    /// Repository URL or path.
    pub source: String,
    /// Destination directory.
    pub dest: PathBuf,
    /// Branch, tag or commit to check out.
    #[arg(long)]
    pub rev: Option<String>,
}

#[derive(Debug, Args)]
pub struct RulesArgs {
    #[command(subcommand)]
    pub action: RulesAction,
}

#[derive(Debug, Subcommand)]
pub enum RulesAction {
    /// List the rules that a scan would run.
    List {
        #[command(flatten)]
        rule_source: RuleSource,
    },
    /// Check rule files and report every problem.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print the built-in rules as TOML.
    Builtin,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<commands::UsageError>() {
                EXIT_USAGE
            } else {
                EXIT_ERROR
            })
        }
    }
}

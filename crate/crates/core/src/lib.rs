//! Lexical static security scanner.
//!
//! The crate covers the whole scan lifecycle: ingesting a source tree
//! ([`corpus`]), declaring detectors ([`rulepack`]), running them
//! ([`engine`]), measuring the results ([`metrics`]), comparing rescans
//! against a saved baseline ([`baseline`]), recording human review
//! decisions ([`triage`]) and rendering everything ([`report`]).

pub mod baseline;
pub mod corpus;
pub mod engine;
pub mod metrics;
pub mod report;
pub mod rulepack;
pub mod severity;
pub mod triage;

pub use baseline::{diff, load_baseline, save_baseline, Baseline, BaselineError, DiffResult};
pub use corpus::{
    classify_lines, detect_language, ingest, CorpusInventory, CorpusSummary, IngestError,
    IngestOptions, LanguageProfile, LanguageRegistry, LineClass, SourceFile,
};
pub use engine::{fingerprint, scan, Finding, ScanOptions, ScanResult, FINGERPRINT_SCHEME};
pub use metrics::{density, DensityKind, DensityMetric};
pub use rulepack::{builtin_rules, load_rulepack, validate_pack, Rule, RuleError, RulePack};
pub use severity::Severity;
pub use triage::{apply_triage, TriageRecord, TriageState, TriageStore, WorkingView};

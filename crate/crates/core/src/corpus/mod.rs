//! Codebase acquisition: file inventory, language detection and line
//! classification.

mod classify;
mod ingest;
mod language;

pub use classify::{
    analyze_lines, classify_lines, Classification, LineClass, LineCounts, LineDetail,
};
pub(crate) use ingest::build_globset;
pub use ingest::{
    ingest, ingest_with, is_binary, sha256_hex, CorpusInventory, CorpusSummary, IngestError,
    IngestOptions, LanguageTotals, SourceFile,
};
pub use language::{
    detect_language, LanguageError, LanguageProfile, LanguageRegistry, UNKNOWN_LANGUAGE,
};

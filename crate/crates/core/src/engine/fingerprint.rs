use sha2::{Digest, Sha256};

/// Version tag of the fingerprint construction. Baselines record it and
/// diffs refuse to compare results produced under different schemes.
pub const FINGERPRINT_SCHEME: &str = "fp1-sha256-rule-path-snippet-occurrence";

/// Collapses every whitespace run to one space and trims the ends.
pub fn normalize_snippet(snippet: &str) -> String {
    snippet.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stable identity of a finding. The line number is deliberately absent so
/// that edits which only move a line keep its fingerprint.
pub fn fingerprint(
    rule_id: &str,
    path: &str,
    normalized_snippet: &str,
    occurrence_index: u32,
) -> String {
    let mut hasher = Sha256::new();
    for part in [
        rule_id.as_bytes(),
        path.as_bytes(),
        normalized_snippet.as_bytes(),
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.update(occurrence_index.to_le_bytes());
    hex::encode(&hasher.finalize()[..16])
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Seven-level severity scale. Declaration order is rank order, so the
/// derived `Ord` sorts `Critical` first and `SuspiciousComment` last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Critical,
    High,
    Medium,
    Low,
    Standard,
    PotentialIssue,
    SuspiciousComment,
}

impl Severity {
    pub const ALL: [Severity; 7] = [
        Severity::Critical,
        Severity::High,
        Severity::Medium,
        Severity::Low,
        Severity::Standard,
        Severity::PotentialIssue,
        Severity::SuspiciousComment,
    ];

    /// 1 (most severe) through 7.
    pub fn rank(self) -> u8 {
        self as u8 + 1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Critical => "critical",
            Severity::High => "high",
            Severity::Medium => "medium",
            Severity::Low => "low",
            Severity::PotentialIssue => "potential_issue",
            Severity::Standard => "standard",
            Severity::SuspiciousComment => "suspicious_comment",
        }
    }

    /// Human label as shown in reports.
    pub fn label(self) -> &'static str {
        match self {
            Severity::Critical => "Critical",
            Severity::High => "High",
            Severity::Medium => "Medium",
            Severity::Low => "Low",
            Severity::PotentialIssue => "Potential Issue",
            Severity::Standard => "Standard",
            Severity::SuspiciousComment => "Suspicious Comment",
        }
    }

    /// True when `self` is at least as severe as `threshold`.
    pub fn at_or_above(self, threshold: Severity) -> bool {
        self <= threshold
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown severity `{0}` (expected one of: critical, high, medium, low, standard, potential_issue, suspicious_comment)")]
pub struct ParseSeverityError(pub String);

impl FromStr for Severity {
    type Err = ParseSeverityError;

    /// Case-insensitive; `_`, `-` and spaces are ignored so `PotentialIssue`,
    /// `potential-issue` and `SUSPICIOUS COMMENT` all parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        let sev = match key.as_str() {
            "critical" => Severity::Critical,
            "high" => Severity::High,
            "medium" => Severity::Medium,
            "low" => Severity::Low,
            "potentialissue" => Severity::PotentialIssue,
            "standard" => Severity::Standard,
            "suspiciouscomment" => Severity::SuspiciousComment,
            _ => return Err(ParseSeverityError(s.to_string())),
        };
        Ok(sev)
    }
}

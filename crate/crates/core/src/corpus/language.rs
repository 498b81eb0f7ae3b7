use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Identifier reported for files whose extension matches no profile.
pub const UNKNOWN_LANGUAGE: &str = "unknown";

/// Comment and string syntax for one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub name: String,
    /// Lowercase, without the leading dot.
    pub extensions: Vec<String>,
    pub line_comment_markers: Vec<String>,
    pub block_comment_pairs: Vec<(String, String)>,
    pub string_delimiters: Vec<char>,
}

impl LanguageProfile {
    fn c_family(name: &str, extensions: &[&str]) -> Self {
        LanguageProfile {
            name: name.to_string(),
            extensions: extensions.iter().map(|e| e.to_string()).collect(),
            line_comment_markers: vec!["//".to_string()],
            block_comment_pairs: vec![("/*".to_string(), "*/".to_string())],
            string_delimiters: vec!['"', '\''],
        }
    }

    pub fn c() -> Self {
        Self::c_family("C", &["c", "h"])
    }

    pub fn cpp() -> Self {
        Self::c_family(
            "C++",
            &["cc", "cpp", "cxx", "c++", "hh", "hpp", "hxx", "inl"],
        )
    }

    pub fn csharp() -> Self {
        Self::c_family("C#", &["cs"])
    }

    pub fn java() -> Self {
        Self::c_family("Java", &["java"])
    }

    pub fn sql() -> Self {
        LanguageProfile {
            name: "SQL".to_string(),
            extensions: vec!["sql".to_string()],
            line_comment_markers: vec!["--".to_string()],
            block_comment_pairs: vec![("/*".to_string(), "*/".to_string())],
            string_delimiters: vec!['\'', '"'],
        }
    }

    /// C-style comment syntax used for files of unknown language.
    pub fn generic() -> Self {
        Self::c_family(UNKNOWN_LANGUAGE, &[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LanguageError {
    #[error("extension `.{extension}` is registered by both {first} and {second}")]
    DuplicateExtension {
        extension: String,
        first: String,
        second: String,
    },
    #[error("language {0} has an empty block comment delimiter")]
    EmptyBlockDelimiter(String),
    #[error("language {0} has an empty line comment marker")]
    EmptyLineMarker(String),
    #[error("duplicate language name {0}")]
    DuplicateName(String),
    #[error("unknown language {0}")]
    UnknownLanguage(String),
}

/// Set of language profiles with extension lookup.
#[derive(Debug, Clone)]
pub struct LanguageRegistry {
    profiles: Vec<LanguageProfile>,
    by_extension: HashMap<String, usize>,
    fallback: LanguageProfile,
}

impl Default for LanguageRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl LanguageRegistry {
    pub fn builtin() -> Self {
        Self::new(vec![
            LanguageProfile::c(),
            LanguageProfile::cpp(),
            LanguageProfile::csharp(),
            LanguageProfile::java(),
            LanguageProfile::sql(),
        ])
        .expect("built-in language profiles are consistent")
    }

    pub fn new(profiles: Vec<LanguageProfile>) -> Result<Self, LanguageError> {
        let mut by_extension = HashMap::new();
        let mut names: HashMap<&str, ()> = HashMap::new();
        for (idx, profile) in profiles.iter().enumerate() {
            if names.insert(profile.name.as_str(), ()).is_some() {
                return Err(LanguageError::DuplicateName(profile.name.clone()));
            }
            if profile.line_comment_markers.iter().any(String::is_empty) {
                return Err(LanguageError::EmptyLineMarker(profile.name.clone()));
            }
            if profile
                .block_comment_pairs
                .iter()
                .any(|(open, close)| open.is_empty() || close.is_empty())
            {
                return Err(LanguageError::EmptyBlockDelimiter(profile.name.clone()));
            }
            for ext in &profile.extensions {
                let ext = normalize_extension(ext);
                if let Some(prev) = by_extension.insert(ext.clone(), idx) {
                    return Err(LanguageError::DuplicateExtension {
                        extension: ext,
                        first: profiles[prev].name.clone(),
                        second: profile.name.clone(),
                    });
                }
            }
        }
        Ok(LanguageRegistry {
            profiles,
            by_extension,
            fallback: LanguageProfile::generic(),
        })
    }

    /// Maps `extension` to an already registered language, replacing any
    /// previous mapping for that extension.
    pub fn override_extension(
        &mut self,
        extension: &str,
        language: &str,
    ) -> Result<(), LanguageError> {
        let idx = self
            .profiles
            .iter()
            .position(|p| p.name.eq_ignore_ascii_case(language))
            .ok_or_else(|| LanguageError::UnknownLanguage(language.to_string()))?;
        let ext = normalize_extension(extension);
        for profile in &mut self.profiles {
            profile.extensions.retain(|e| normalize_extension(e) != ext);
        }
        self.profiles[idx].extensions.push(ext.clone());
        self.by_extension.insert(ext, idx);
        Ok(())
    }

    /// Language of `path`, matched by extension, case-insensitively.
    pub fn detect(&self, path: &str) -> &str {
        let file_name = path.rsplit(['/', '\\']).next().unwrap_or(path);
        match file_name.rsplit_once('.') {
            Some((_, ext)) => self
                .by_extension
                .get(&ext.to_ascii_lowercase())
                .map(|&idx| self.profiles[idx].name.as_str())
                .unwrap_or(UNKNOWN_LANGUAGE),
            _ => UNKNOWN_LANGUAGE,
        }
    }

    /// Profile for a language name; unknown names get the generic profile.
    pub fn profile(&self, language: &str) -> &LanguageProfile {
        self.get(language).unwrap_or(&self.fallback)
    }

    pub fn get(&self, language: &str) -> Option<&LanguageProfile> {
        self.profiles.iter().find(|p| p.name == language)
    }

    pub fn is_registered(&self, language: &str) -> bool {
        language == UNKNOWN_LANGUAGE || self.get(language).is_some()
    }

    pub fn profiles(&self) -> &[LanguageProfile] {
        &self.profiles
    }
}

fn normalize_extension(ext: &str) -> String {
    ext.trim_start_matches('.').to_ascii_lowercase()
}

/// Language of `path` under the built-in registry.
pub fn detect_language(path: &str) -> String {
    static REGISTRY: OnceLock<LanguageRegistry> = OnceLock::new();
    REGISTRY
        .get_or_init(LanguageRegistry::builtin)
        .detect(path)
        .to_string()
}

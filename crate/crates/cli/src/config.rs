//! Project configuration file. Command-line flags take precedence over
//! values read here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use vscan_core::{DensityKind, Severity};

pub const OUT_DIR_ENV: &str = "VSCAN_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "vscan-out";
pub const DEFAULT_TRIAGE_STORE: &str = "vscan-triage.jsonl";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub include: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    /// Extra rule files, relative to the config file.
    #[serde(default)]
    pub rules: Vec<PathBuf>,
    #[serde(default)]
    pub no_builtin: bool,
    /// Extension (without dot) to language name.
    #[serde(default)]
    pub language_overrides: BTreeMap<String, String>,
    pub languages: Option<Vec<String>>,
    pub density: Option<String>,
    pub density_open_only: Option<bool>,
    pub fail_level: Option<String>,
    pub out: Option<PathBuf>,
    pub triage_store: Option<PathBuf>,
    pub threads: Option<usize>,
    pub non_comment_only: Option<bool>,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub port: Option<u16>,
    pub bind: Option<String>,
    pub ui: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.rules.iter_mut().for_each(rebase);
        cfg.out.iter_mut().for_each(rebase);
        cfg.triage_store.iter_mut().for_each(rebase);
        cfg.serve.ui.iter_mut().for_each(rebase);
        // validate eagerly so a typo fails before any work starts
        cfg.density_kind()?;
        cfg.fail_level()?;
        Ok(cfg)
    }

    pub fn density_kind(&self) -> Result<Option<DensityKind>> {
        self.density
            .as_deref()
            .map(|s| {
                s.parse::<DensityKind>()
                    .map_err(anyhow::Error::msg)
                    .context("config `density`")
            })
            .transpose()
    }

    pub fn fail_level(&self) -> Result<Option<Severity>> {
        self.fail_level
            .as_deref()
            .map(|s| s.parse::<Severity>().context("config `fail_level`"))
            .transpose()
    }

    /// Flag, then environment, then config file, then default.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(env);
        }
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn triage_store(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.triage_store.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_TRIAGE_STORE))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rebases() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vscan.toml");
        std::fs::write(
            &path,
            "include = [\"src/**\"]\nrules = [\"extra.toml\"]\ndensity = \"loc\"\nfail_level = \"high\"\n\n[language_overrides]\ninc = \"C\"\n\n[serve]\nport = 9000\n",
        )
        .unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.rules, vec![dir.path().join("extra.toml")]);
        assert_eq!(cfg.density_kind().unwrap(), Some(DensityKind::Loc));
        assert_eq!(cfg.fail_level().unwrap(), Some(Severity::High));
        assert_eq!(cfg.language_overrides["inc"], "C");
        assert_eq!(cfg.serve.port, Some(9000));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "inclde = []\n").unwrap();
        assert!(Config::load(&path).is_err());
        std::fs::write(&path, "fail_level = \"severe\"\n").unwrap();
        assert!(Config::load(&path).is_err());
    }
}

//! Flat key-value configuration files.
//!
//! Format: one `section.key = value` per line, `#` starts a comment. Every
//! key maps one-to-one onto a command-line flag; flags win over file values,
//! file values win over built-in defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use spoofdet_core::Error;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Config(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config(_) => "Config",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Parsed configuration file (possibly empty when no file was given).
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{}:{}: expected `section.key = value`",
                    path.display(),
                    idx + 1
                ))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::Config(format!("config key {key} has invalid value {raw:?}: {e}"))
            }),
        }
    }
}

/// Flag beats config beats default.
pub fn resolve<T>(flag: Option<T>, cfg: Option<T>, default: T) -> T {
    flag.or(cfg).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\nseed = 7\ngmm.components = 32 # trailing\n\nxvector.lr=0.01\n",
        )
        .unwrap();
        let cfg = FileConfig::load(&path).unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.get::<usize>("gmm.components").unwrap(), Some(32));
        assert_eq!(cfg.get::<f64>("xvector.lr").unwrap(), Some(0.01));
        assert_eq!(cfg.get::<f64>("missing.key").unwrap(), None);
    }

    #[test]
    fn bad_values_are_reported_with_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "gmm.components = many\n").unwrap();
        let cfg = FileConfig::load(&path).unwrap();
        let err = cfg.get::<usize>("gmm.components").unwrap_err();
        assert!(err.to_string().contains("gmm.components"));
        assert_eq!(err.code(), "Config");
    }

    #[test]
    fn missing_equals_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "just a line\n").unwrap();
        assert!(FileConfig::load(&path).is_err());
    }
}

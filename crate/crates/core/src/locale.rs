//! Locale tables: every user-visible description string lives here.
//!
//! A locale file is TOML. Nested tables are flattened into dotted keys, so
//! `[pattern.a] pitch = "..."` and `"pattern.a.pitch" = "..."` are the same
//! entry. Integer-looking table keys (`[au] 12 = ...`) keep their literal
//! spelling.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

const ENGLISH: &str = include_str!("../locales/en.toml");

#[derive(Debug, Error, PartialEq)]
pub enum LocaleError {
    #[error("missing locale key `{0}`")]
    MissingLocaleKey(String),
    #[error("cannot read locale file {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid locale file: {0}")]
    Parse(String),
    #[error("locale key `{0}` must be a string")]
    NotAString(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LocaleTable {
    entries: BTreeMap<String, String>,
}

impl LocaleTable {
    /// The bundled English table.
    pub fn english() -> Self {
        Self::parse(ENGLISH).expect("bundled English locale is valid")
    }

    pub fn parse(text: &str) -> Result<Self, LocaleError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| LocaleError::Parse(e.to_string()))?;
        let mut entries = BTreeMap::new();
        flatten("", &toml::Value::Table(table), &mut entries)?;
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, LocaleError> {
        let text = fs::read_to_string(path).map_err(|e| LocaleError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Looks up a key. Empty strings count as missing so that a partially
    /// filled locale fails loudly instead of producing blank descriptions.
    pub fn get(&self, key: &str) -> Result<&str, LocaleError> {
        match self.entries.get(key) {
            Some(v) if !v.is_empty() => Ok(v.as_str()),
            _ => Err(LocaleError::MissingLocaleKey(key.to_string())),
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

fn flatten(
    prefix: &str,
    value: &toml::Value,
    out: &mut BTreeMap<String, String>,
) -> Result<(), LocaleError> {
    match value {
        toml::Value::Table(table) => {
            for (k, v) in table {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out)?;
            }
            Ok(())
        }
        toml::Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
            Ok(())
        }
        _ => Err(LocaleError::NotAString(prefix.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_and_flat_keys_agree() {
        let nested = LocaleTable::parse("[pattern.a]\npitch = \"x\"\n").unwrap();
        let flat = LocaleTable::parse("\"pattern.a.pitch\" = \"x\"\n").unwrap();
        assert_eq!(nested, flat);
        assert_eq!(nested.get("pattern.a.pitch").unwrap(), "x");
    }

    #[test]
    fn empty_value_is_missing() {
        let t = LocaleTable::parse("a = \"\"\n").unwrap();
        assert!(matches!(t.get("a"), Err(LocaleError::MissingLocaleKey(k)) if k == "a"));
    }

    #[test]
    fn non_string_rejected() {
        assert!(matches!(
            LocaleTable::parse("a = 3\n"),
            Err(LocaleError::NotAString(_))
        ));
    }

    #[test]
    fn japanese_slot_is_empty() {
        let ja = LocaleTable::parse(include_str!("../locales/ja.toml")).unwrap();
        assert_eq!(ja.keys().count(), 0);
        assert!(ja.get("pattern.a.pitch").is_err());
    }
}

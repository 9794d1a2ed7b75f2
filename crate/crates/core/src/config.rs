//! `key = value` configuration files shared by corpus specs and run specs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Parsed `key = value` lines. Blank lines and `#` comments are ignored;
/// a repeated key is an error.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    file: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(file: &str, text: &str) -> Result<KeyValues> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                file: file.to_string(),
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            let key = k.trim().to_string();
            if entries
                .insert(key.clone(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line: i + 1,
                    msg: format!("duplicate key {key}"),
                });
            }
        }
        Ok(KeyValues {
            file: file.to_string(),
            entries,
        })
    }

    /// Sets `key`, replacing any value read from the file.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), (0, value.into()));
    }

    /// Copies every entry of `other` over this one.
    pub fn overlay(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Entries restricted to `keys`.
    pub fn subset(&self, keys: &[&str]) -> KeyValues {
        KeyValues {
            file: self.file.clone(),
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| keys.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse {
                    file: self.file.clone(),
                    line: *line,
                    msg: format!("unknown key {k}"),
                });
            }
        }
        Ok(())
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Parse {
                file: self.file.clone(),
                line: *line,
                msg: format!("bad value for {key}: {v:?}"),
            }),
        }
    }

    /// Comma-separated list value.
    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| Error::Parse {
                        file: self.file.clone(),
                        line: *line,
                        msg: format!("bad list item for {key}: {s:?}"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

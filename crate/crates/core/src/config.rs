//! Line-oriented `key = value` files.
//!
//! Blank lines and lines starting with `#` are ignored. Values may be wrapped
//! in double quotes. Keys may appear at most once.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{}: {msg}", at(*line))]
    Syntax { line: usize, msg: String },
    #[error("{}: unknown key `{key}`", at(*line))]
    UnknownKey { line: usize, key: String },
    #[error("{}: duplicate key `{key}`", at(*line))]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("{}: bad value for `{key}`: {msg}", at(*line))]
    Value { line: usize, key: String, msg: String },
    #[error("{}: `{key}`: {msg}", at(*line))]
    Constraint { line: usize, key: String, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Entries added with [`KeyValueFile::set`] have line 0.
fn at(line: usize) -> String {
    if line == 0 {
        "override".to_string()
    } else {
        format!("line {line}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// 1-based line number.
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueFile {
    entries: Vec<Entry>,
}

impl KeyValueFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("expected `key = value`, got `{trimmed}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("malformed key `{key}`"),
                });
            }
            let mut value = value.trim();
            if value.starts_with('"') {
                if value.len() < 2 || !value.ends_with('"') {
                    return Err(ConfigError::Syntax {
                        line,
                        msg: "unterminated quoted value".into(),
                    });
                }
                value = &value[1..value.len() - 1];
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            entries.push(Entry {
                line,
                key: key.to_string(),
                value: value.to_string(),
            });
        }
        Ok(KeyValueFile { entries })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Missing {
            key: key.to_string(),
        })
    }

    /// Inserts or replaces a value; replaced entries keep their line number.
    pub fn set(&mut self, key: &str, value: &str) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.key == key) {
            e.value = value.to_string();
        } else {
            self.entries.push(Entry {
                line: 0,
                key: key.to_string(),
                value: value.to_string(),
            });
        }
    }

    /// Canonical text form: `key = value` lines sorted by key.
    pub fn canonical(&self) -> String {
        let mut pairs: Vec<_> = self.entries.iter().map(|e| (&e.key, &e.value)).collect();
        pairs.sort();
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

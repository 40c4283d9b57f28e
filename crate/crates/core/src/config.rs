//! Flat `key=value` text configuration shared by every config-driven piece.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for {key}: {msg}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        msg: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl Entry {
    pub fn unknown(&self) -> ConfigError {
        ConfigError::UnknownKey {
            line: self.line,
            key: self.key.clone(),
        }
    }

    pub fn invalid(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            line: self.line,
            key: self.key.clone(),
            value: self.value.clone(),
            msg: msg.into(),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse::<T>().map_err(|e| self.invalid(e.to_string()))
    }
}

/// Splits text into entries. Blank lines and `#` comments are ignored;
/// keys and values are trimmed.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            });
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            });
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

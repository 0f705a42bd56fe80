//! Flat `key = value` configuration files.
//!
//! ```text
//! # comments start with '#'
//! model.d = 8    # and may trail a value
//! amrf.variant = matrix_literal
//! train.lr = 0.001
//! ```
//!
//! Keys are dotted names. Consumers [`take`](KeyValues::take) the keys they
//! understand and call [`finish`](KeyValues::finish), which rejects anything
//! left over so a typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("invalid key `{key}`"),
                });
            }
            if let Some((_, prev)) = entries.insert(key.to_string(), (value.to_string(), line_no)) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("key `{key}` already set on line {prev}"),
                });
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes `key` and parses its value.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line)) => value.parse().map(Some).map_err(|e| Error::Parse {
                line,
                message: format!("bad value `{value}` for `{key}`: {e}"),
            }),
        }
    }

    /// Like [`take`](Self::take) but writes into `slot` only when present.
    pub fn take_into<T>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (_, line))| *line) {
            None => Ok(()),
            Some((key, (_, line))) => Err(Error::Parse {
                line,
                message: format!("unknown key `{key}`"),
            }),
        }
    }
}

/// Renders `(key, value)` pairs as config lines, one per pair.
pub fn render(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(" =");
        if !v.is_empty() {
            out.push(' ');
            out.push_str(v);
        }
        out.push('\n');
    }
    out
}

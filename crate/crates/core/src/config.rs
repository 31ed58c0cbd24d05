//! Flat `key = value` configuration documents.
//!
//! One entry per line, `#` starts a comment. Lengths take an optional unit
//! suffix (`m`, `mm`, `um`, `nm`); a bare number is meters. Pairs are written
//! `a, b` or `AxB`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            if entries
                .insert(key.to_string(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(ConfigDoc { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn err(&self, key: &str, message: String) -> Error {
        let line = self.entries.get(key).map_or(0, |(l, _)| *l);
        Error::Config { line, message }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| self.err(key, format!("{key}: not a number: {v:?}")))
            })
            .transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.raw(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| self.err(key, format!("{key}: not an unsigned integer: {v:?}")))
            })
            .transpose()
    }

    pub fn length(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| parse_length(v).map_err(|m| self.err(key, format!("{key}: {m}"))))
            .transpose()
    }

    pub fn length_pair(&self, key: &str) -> Result<Option<(f64, f64)>> {
        self.raw(key)
            .map(|v| {
                let (a, b) = split_pair(v).ok_or_else(|| self.err(key, format!("{key}: expected a pair")))?;
                let a = parse_length(a).map_err(|m| self.err(key, format!("{key}: {m}")))?;
                let b = parse_length(b).map_err(|m| self.err(key, format!("{key}: {m}")))?;
                Ok((a, b))
            })
            .transpose()
    }

    pub fn usize_pair(&self, key: &str) -> Result<Option<(usize, usize)>> {
        self.raw(key)
            .map(|v| {
                let bad = || self.err(key, format!("{key}: expected an integer pair, got {v:?}"));
                let (a, b) = split_pair(v).ok_or_else(bad)?;
                Ok((
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                ))
            })
            .transpose()
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }
}

fn split_pair(v: &str) -> Option<(&str, &str)> {
    v.split_once(',')
        .or_else(|| v.split_once('x'))
        .or_else(|| v.split_once('X'))
        .map(|(a, b)| (a.trim(), b.trim()))
}

/// Parses a length with an optional `m|mm|um|nm` suffix into meters.
pub fn parse_length(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    let (num, scale) = if let Some(n) = t.strip_suffix("nm") {
        (n, 1e-9)
    } else if let Some(n) = t.strip_suffix("um") {
        (n, 1e-6)
    } else if let Some(n) = t.strip_suffix("mm") {
        (n, 1e-3)
    } else if let Some(n) = t.strip_suffix('m') {
        (n, 1.0)
    } else {
        (t, 1.0)
    };
    num.trim()
        .parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| format!("invalid length {text:?}"))
}

/// Formats meters in micrometers with an explicit unit tag.
pub fn format_um(meters: f64) -> String {
    format!("{}um", meters * 1e6)
}

//! Flat `key=value` text blocks with `#` comments.
//!
//! This is the one config syntax in the project: CLI config files, the
//! resolved-config echo, and the config blocks embedded in dataset and
//! checkpoint files all use it. Writers emit keys in a fixed order so the
//! output is canonical and diffable.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Parses a `key=value` block. Later occurrences of a key win.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected key=value, got {:?}",
                lineno + 1,
                raw
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Typed lookup helpers over a parsed block.
pub struct KvReader {
    map: BTreeMap<String, String>,
}

impl KvReader {
    pub fn from_str(text: &str) -> Result<Self> {
        Ok(Self { map: parse(text)? })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    /// Parses `key` if present, otherwise keeps `default`.
    pub fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<T>().map_err(|_| {
                Error::Config(format!("key {key}: cannot parse value {v:?}"))
            }),
        }
    }

    /// Comma-separated list of f64, e.g. `0,0.25,1`. Empty string is an
    /// empty list.
    pub fn get_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|part| {
                    part.trim().parse::<f64>().map_err(|_| {
                        Error::Config(format!("key {key}: cannot parse list item {part:?}"))
                    })
                })
                .collect(),
        }
    }

    pub fn get_usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(v) if v.is_empty() => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|part| {
                    part.trim().parse::<usize>().map_err(|_| {
                        Error::Config(format!("key {key}: cannot parse list item {part:?}"))
                    })
                })
                .collect(),
        }
    }

    /// `on`/`off` flags (also accepts true/false).
    pub fn get_flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.map.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("on") | Some("true") => Ok(true),
            Some("off") | Some("false") => Ok(false),
            Some(v) => Err(Error::Config(format!(
                "key {key}: expected on/off, got {v:?}"
            ))),
        }
    }

    /// Rejects keys outside `allowed` so typos in config files surface.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
        }
        Ok(())
    }
}

/// Ordered writer; `line` appends one `key=value` pair.
#[derive(Default)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn line(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        use std::fmt::Write;
        writeln!(self.out, "{key}={value}").expect("string write");
        self
    }

    pub fn list<T: std::fmt::Display>(&mut self, key: &str, values: &[T]) -> &mut Self {
        let joined = values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.line(key, joined)
    }

    pub fn flag(&mut self, key: &str, value: bool) -> &mut Self {
        self.line(key, if value { "on" } else { "off" })
    }

    pub fn finish(self) -> String {
        self.out
    }
}

//! Run configuration: a flat `key = value` text format with `[section]`
//! headers, overridable from the command line. Keys are consumed as they are
//! read; anything left over is an unknown key and rejects the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SmpError};

#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<ConfigMap> {
        let mut map = ConfigMap::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return Err(SmpError::Config(format!(
                        "line {}: malformed section header '{line}'",
                        lineno + 1
                    )));
                }
                section = line[1..line.len() - 1].trim().to_string();
                map.sections.entry(section.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(SmpError::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            if section.is_empty() {
                return Err(SmpError::Config(format!(
                    "line {}: key outside any [section]",
                    lineno + 1
                )));
            }
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let entry = map.sections.get_mut(&section).unwrap();
            if entry.contains_key(&key) {
                return Err(SmpError::Config(format!(
                    "line {}: duplicate key '{section}.{key}'",
                    lineno + 1
                )));
            }
            entry.insert(key, value);
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<ConfigMap> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SmpError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let Some((path, value)) = assignment.split_once('=') else {
            return Err(SmpError::Config(format!(
                "override '{assignment}' is not of the form section.key=value"
            )));
        };
        let Some((section, key)) = path.trim().split_once('.') else {
            return Err(SmpError::Config(format!(
                "override '{assignment}' is missing the section prefix"
            )));
        };
        self.sections
            .entry(section.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    /// Start consuming a section. Missing sections read as empty.
    pub fn section(&mut self, name: &str) -> SectionReader<'_> {
        SectionReader {
            map: self.sections.entry(name.to_string()).or_default(),
            name: name.to_string(),
        }
    }

    /// Error if any key anywhere was never consumed.
    pub fn ensure_consumed(&self) -> Result<()> {
        for (section, keys) in &self.sections {
            if let Some(key) = keys.keys().next() {
                return Err(SmpError::Config(format!("unknown key '{section}.{key}'")));
            }
        }
        Ok(())
    }
}

/// Take-based reader over one section; consumed keys are removed.
pub struct SectionReader<'a> {
    map: &'a mut BTreeMap<String, String>,
    name: String,
}

impl SectionReader<'_> {
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    pub fn str_or(&mut self, key: &str, default: &str) -> String {
        self.take(key).unwrap_or_else(|| default.to_string())
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(key, &v, "a number")),
        }
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(key, &v, "an integer")),
        }
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(key, &v, "an integer")),
        }
    }

    pub fn u32_or(&mut self, key: &str, default: u32) -> Result<u32> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.bad(key, &v, "an integer")),
        }
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(self.bad(key, &v, "true or false")),
            },
        }
    }

    /// Comma-separated integer list, e.g. `hidden = 64,64`.
    pub fn usize_list_or(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse()
                        .map_err(|_| self.bad(key, &v, "a comma-separated integer list"))
                })
                .collect(),
        }
    }

    fn bad(&self, key: &str, value: &str, expected: &str) -> SmpError {
        SmpError::Config(format!(
            "key '{}.{key}' has value '{value}', expected {expected}",
            self.name
        ))
    }
}

/// Canonical text form of a resolved configuration, written next to every
/// run's artifacts.
pub fn render_echo(entries: &[(&str, Vec<(String, String)>)]) -> String {
    let mut out = String::new();
    for (section, keys) in entries {
        let _ = writeln!(out, "[{section}]");
        for (key, value) in keys {
            let _ = writeln!(out, "{key} = {value}");
        }
        let _ = writeln!(out);
    }
    out
}

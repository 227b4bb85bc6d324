//! Flat `key = value` configuration files.
//!
//! Every line is a TOML key/value pair with a bare key, so any TOML parser
//! reads the files too; nesting is never used.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{IoError, Result};
use crate::table::format_number;

/// Diagnostic at the line where the TOML parser gave up.
pub(crate) fn toml_error(path: &Path, text: &str, e: &toml::de::Error) -> IoError {
    let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
    IoError::malformed(path, line, e.message().to_string())
}

pub struct FlatConfig {
    path: PathBuf,
    table: toml::Table,
    lines: HashMap<String, u64>,
}

impl FlatConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| toml_error(path, text, &e))?;
        let mut lines = HashMap::new();
        for (i, l) in text.lines().enumerate() {
            if let Some((k, _)) = l.split_once('=') {
                lines.entry(k.trim().to_string()).or_insert(i as u64 + 1);
            }
        }
        for (k, v) in &table {
            if v.is_table() || v.is_array() {
                return Err(IoError::malformed(path, lines.get(k).copied().unwrap_or(0), format!("`{k}` must be a plain value")));
            }
        }
        Ok(Self { path: path.to_owned(), table, lines })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_owned(), source })?;
        Self::parse(&text, path)
    }

    /// Diagnostic pointing at the line that defines `key`.
    pub fn invalid(&self, key: &str, message: impl std::fmt::Display) -> IoError {
        let line = self.lines.get(key).copied().unwrap_or(0);
        IoError::malformed(&self.path, line, format!("`{key}`: {message}"))
    }

    fn missing(&self, key: &str) -> IoError {
        let end = self.lines.values().copied().max().unwrap_or(0) + 1;
        IoError::malformed(&self.path, end, format!("missing key `{key}`"))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        match self.table.get(key) {
            None => Err(self.missing(key)),
            Some(toml::Value::Float(x)) => Ok(*x),
            Some(toml::Value::Integer(i)) => Ok(*i as f64),
            Some(_) => Err(self.invalid(key, "expected a number")),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.contains(key) {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        match self.table.get(key) {
            None => Err(self.missing(key)),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(_) => Err(self.invalid(key, "expected a non-negative integer")),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        match self.table.get(key) {
            None => Err(self.missing(key)),
            Some(toml::Value::String(s)) => Ok(s),
            Some(_) => Err(self.invalid(key, "expected a quoted string")),
        }
    }

    /// Positive finite number.
    pub fn positive(&self, key: &str) -> Result<f64> {
        let x = self.f64(key)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(self.invalid(key, "must be positive"));
        }
        Ok(x)
    }

    /// Non-negative finite number.
    pub fn non_negative(&self, key: &str) -> Result<f64> {
        let x = self.f64(key)?;
        if !(x >= 0.0 && x.is_finite()) {
            return Err(self.invalid(key, "must be non-negative"));
        }
        Ok(x)
    }
}

/// Builder for a flat configuration file.
#[derive(Default)]
pub struct FlatWriter {
    text: String,
}

impl FlatWriter {
    pub fn comment(&mut self, c: &str) -> &mut Self {
        let _ = writeln!(self.text, "# {c}");
        self
    }

    pub fn num(&mut self, key: &str, x: f64) -> &mut Self {
        let v = format_number(x);
        // TOML wants a fraction or exponent on floats
        let v = if v.contains(['.', 'e', 'E']) { v } else { format!("{v}.0") };
        let _ = writeln!(self.text, "{key} = {v}");
        self
    }

    pub fn int(&mut self, key: &str, i: u64) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {i}");
        self
    }

    pub fn str(&mut self, key: &str, s: &str) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {}", toml::Value::String(s.to_string()));
        self
    }

    pub fn finish(&self) -> String {
        self.text.clone()
    }
}

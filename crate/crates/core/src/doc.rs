//! Keyed text documents: one `key value…` record per line, `#` comments.
//! Floats are written with 17 significant digits so they read back exactly.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DocError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    Parse { key: String, value: String },
    #[error("key `{key}`: expected {expected} values, found {found}")]
    Count { key: String, expected: usize, found: usize },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyedDocument {
    entries: Vec<(String, Vec<String>)>,
}

impl KeyedDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_str(&mut self, key: &str, value: &str) {
        self.entries.push((key.to_string(), vec![value.to_string()]));
    }

    pub fn push_display<T: std::fmt::Display>(&mut self, key: &str, value: T) {
        self.push_str(key, &value.to_string());
    }

    pub fn push_floats(&mut self, key: &str, values: &[f64]) {
        self.entries.push((key.to_string(), values.iter().map(|v| fmt_f64(*v)).collect()));
    }

    pub fn push_float(&mut self, key: &str, value: f64) {
        self.push_floats(key, &[value]);
    }

    pub fn render(&self, header: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# {header}").unwrap();
        for (k, v) in &self.entries {
            if v.is_empty() {
                writeln!(out, "{k}").unwrap();
            } else {
                writeln!(out, "{k} {}", v.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, DocError> {
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().ok_or(DocError::Syntax { line: idx + 1, message: "empty record".into() })?;
            if entries.iter().any(|(k, _)| k == key) {
                return Err(DocError::Duplicate(key.to_string()));
            }
            entries.push((key.to_string(), parts.map(str::to_string).collect()));
        }
        Ok(Self { entries })
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.iter().any(|(k, _)| k == key)
    }

    pub fn raw(&self, key: &str) -> Result<&[String], DocError> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| DocError::Missing(key.to_string()))
    }

    pub fn values<T: FromStr>(&self, key: &str) -> Result<Vec<T>, DocError> {
        self.raw(key)?
            .iter()
            .map(|v| v.parse().map_err(|_| DocError::Parse { key: key.to_string(), value: v.clone() }))
            .collect()
    }

    pub fn values_n<T: FromStr>(&self, key: &str, expected: usize) -> Result<Vec<T>, DocError> {
        let v = self.values(key)?;
        if v.len() != expected {
            return Err(DocError::Count { key: key.to_string(), expected, found: v.len() });
        }
        Ok(v)
    }

    pub fn value<T: FromStr>(&self, key: &str) -> Result<T, DocError> {
        Ok(self.values_n(key, 1)?.pop().expect("one value"))
    }
}

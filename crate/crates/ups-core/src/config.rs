//! Flat `key = value` configuration files: UTF-8, one entry per line,
//! `#` starts a comment. CLI overrides win over file entries.

use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config line {0}: expected `key = value`, got {1:?}")]
    Syntax(usize, String),
    #[error("config key {0}: {1}")]
    Value(String, String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Clone, Debug, Default)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Syntax(i + 1, raw.to_string()));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.0.insert(key.to_string(), value.to_string());
    }

    /// Apply `key=value` override strings (CLI wins over the file).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let Some((k, v)) = o.split_once('=') else {
                return Err(Error::Syntax(0, o.clone()));
            };
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    pub fn get_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Value(key.into(), format!("{e}"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Value(key.into(), format!("{e}"))),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Value(key.into(), format!("{e}"))),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => Err(Error::Value(key.into(), format!("not a bool: {v:?}"))),
        }
    }

    pub fn get_list(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.get(key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    /// Canonical sorted `key = value` text used for the config hash and
    /// run snapshots.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let c = ConfigMap::parse("# header\n n = 64 # inline\n\nlr=5e-5\n").unwrap();
        assert_eq!(c.get_usize("n", 0).unwrap(), 64);
        assert_eq!(c.get_f64("lr", 0.0).unwrap(), 5e-5);
        assert_eq!(c.get_usize("missing", 7).unwrap(), 7);
    }

    #[test]
    fn rejects_garbage_lines() {
        assert!(ConfigMap::parse("this is not a pair\n").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut c = ConfigMap::parse("n = 64\n").unwrap();
        c.apply_overrides(&["n=128".to_string()]).unwrap();
        assert_eq!(c.get_usize("n", 0).unwrap(), 128);
    }

    #[test]
    fn hash_is_stable_and_order_independent() {
        let a = ConfigMap::parse("a = 1\nb = 2\n").unwrap();
        let b = ConfigMap::parse("b = 2\na = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ConfigMap::parse("a = 1\nb = 3\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}

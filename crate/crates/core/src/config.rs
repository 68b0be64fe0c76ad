//! Flat `key = value` configuration files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. Keys are
//! case-insensitive and `-` is treated as `_`, so `burn-in` and `burn_in` name
//! the same entry. Keys starting with `grid.` hold comma-separated value lists
//! for sensitivity sweeps. Command-line flags override anything read here.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const GRID_PREFIX: &str = "grid.";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
    grid: Vec<(String, Vec<f64>)>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line {}: expected `key = value`", lineno + 1)))?;
            let key = normalize_key(k);
            let value = v.trim().to_string();
            if key.is_empty() {
                return Err(Error::invalid(format!("config line {}: empty key", lineno + 1)));
            }
            if let Some(param) = key.strip_prefix(GRID_PREFIX) {
                let values = parse_list(&value)
                    .map_err(|e| Error::invalid(format!("config line {}: {e}", lineno + 1)))?;
                if cfg.grid.iter().any(|(p, _)| p == param) {
                    return Err(Error::invalid(format!("config line {}: duplicate grid `{param}`", lineno + 1)));
                }
                cfg.grid.push((param.to_string(), values));
            } else if cfg.entries.insert(key.clone(), value).is_some() {
                return Err(Error::invalid(format!("config line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(&normalize_key(key)) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("config key `{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Grid axes in file order.
    pub fn grid(&self) -> &[(String, Vec<f64>)] {
        &self.grid
    }

    /// Fail on keys outside `allowed` (already normalized).
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::invalid(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }
}

/// Comma-separated reals.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::invalid(format!("`{t}` is not a number"))))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::invalid("empty value list"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_comments_and_grids() {
        let cfg = ConfigFile::parse(
            "# header\nIterations = 200\nburn-in=50 # trailing\n\ngrid.h = 2000, 2500\nvariant = dist\n",
        )
        .unwrap();
        assert_eq!(cfg.get::<usize>("iterations").unwrap(), Some(200));
        assert_eq!(cfg.get::<usize>("burn_in").unwrap(), Some(50));
        assert_eq!(cfg.get_str("variant"), Some("dist"));
        assert_eq!(cfg.get::<f64>("alpha").unwrap(), None);
        assert_eq!(cfg.grid(), &[("h".to_string(), vec![2000.0, 2500.0])]);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ConfigFile::parse("iterations 200").is_err());
        assert!(ConfigFile::parse("a = 1\na = 2").is_err());
        assert!(ConfigFile::parse("grid.h = ").is_err());
        assert!(ConfigFile::parse("grid.h = 1, x").is_err());
        let cfg = ConfigFile::parse("iterations = many").unwrap();
        assert!(cfg.get::<usize>("iterations").is_err());
        assert!(cfg.check_keys(&["seed"]).is_err());
        assert!(cfg.check_keys(&["iterations"]).is_ok());
    }
}

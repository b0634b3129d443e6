//! Line-oriented `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Keys are consumed by the
//! component that understands them; [`KvConfig::finish`] rejects whatever is
//! left over so that typos surface as errors naming the key.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("duplicate key {0}")]
    Duplicate(String),
    #[error("unknown config key {0}")]
    UnknownKey(String),
    #[error("missing config key {0}")]
    MissingKey(String),
    #[error("config key {key}: invalid value {value:?}")]
    InvalidValue { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
    order: Vec<String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<KvConfig, ConfigError> {
        let mut cfg = KvConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            cfg.insert(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn insert(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if self.entries.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::Duplicate(key.to_string()));
        }
        self.order.push(key.to_string());
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in file order, for echoing into manifests.
    pub fn entries(&self) -> Vec<(String, String)> {
        self.order
            .iter()
            .filter_map(|k| self.entries.get(k).map(|v| (k.clone(), v.clone())))
            .collect()
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v,
            }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Removes and parses a comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| ConfigError::InvalidValue {
                    key: key.to_string(),
                    value: v,
                }),
        }
    }

    /// Keys starting with `prefix`, with the prefix stripped, removed from the config.
    pub fn take_prefixed(&mut self, prefix: &str) -> Vec<(String, String)> {
        let keys: Vec<String> = self
            .order
            .iter()
            .filter(|k| k.starts_with(prefix) && self.entries.contains_key(*k))
            .cloned()
            .collect();
        keys.into_iter()
            .map(|k| {
                let v = self.entries.remove(&k).unwrap_or_default();
                (k[prefix.len()..].to_string(), v)
            })
            .collect()
    }

    /// Errors on the first key nobody consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        match self.order.into_iter().find(|k| self.entries.contains_key(k)) {
            Some(k) => Err(ConfigError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_consumes() {
        let mut c = KvConfig::parse("# comment\nn = 5\nrates = 1, 18,36\n\nname = rf # trailing\n").unwrap();
        assert_eq!(c.take::<usize>("n").unwrap(), Some(5));
        assert_eq!(c.take_list::<f64>("rates").unwrap(), Some(vec![1.0, 18.0, 36.0]));
        assert_eq!(c.take_str("name").as_deref(), Some("rf"));
        c.finish().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let mut c = KvConfig::parse("n = 5\nbogus = 1\n").unwrap();
        c.take::<usize>("n").unwrap();
        assert_eq!(c.finish(), Err(ConfigError::UnknownKey("bogus".into())));
    }

    #[test]
    fn bad_values_and_syntax() {
        assert_eq!(KvConfig::parse("novalue\n"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(KvConfig::parse("a=1\na=2\n"), Err(ConfigError::Duplicate(_))));
        let mut c = KvConfig::parse("n = five\n").unwrap();
        assert!(c.take::<usize>("n").is_err());
    }
}

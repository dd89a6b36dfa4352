//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An ordered set of `key = value` pairs. Later assignments win.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> KeyValues {
        KeyValues::default()
    }

    pub fn parse(text: &str) -> Result<KeyValues> {
        let mut kv = KeyValues::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            kv.set_assignment(line)
                .map_err(|message| Error::Parse { line: i + 1, message })?;
        }
        Ok(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<KeyValues> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        KeyValues::parse(&text)
    }

    /// Applies a single `key=value` assignment.
    pub fn set_assignment(&mut self, assignment: &str) -> std::result::Result<(), String> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {assignment:?}"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err("empty key".into());
        }
        self.entries.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("{key} = {v:?}: {e}"))))
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    /// Comma-separated list value.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
    }

    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.list(key)
            .map(|items| {
                items
                    .iter()
                    .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("{key}: {v:?}: {e}"))))
                    .collect()
            })
            .transpose()
    }

    /// Fails on any key not in `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

pub fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("expected on/off, got {v:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut kv = KeyValues::parse("# comment\nlr = 0.01\n\ntypes = A, B\n").unwrap();
        assert_eq!(kv.parse_or("lr", 0.0).unwrap(), 0.01);
        assert_eq!(kv.list("types").unwrap(), ["A", "B"]);
        kv.set_assignment("lr=0.5").unwrap();
        assert_eq!(kv.get("lr"), Some("0.5"));
        assert!(kv.check_known(&["lr"]).is_err());
        assert!(KeyValues::parse("novalue\n").is_err());
        assert_eq!(KeyValues::parse(&kv.render()).unwrap(), kv);
    }
}

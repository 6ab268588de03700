//! Key-value experiment files.
//!
//! One `key = value` pair per line. Blank lines and lines starting with `#`
//! are ignored. Keys are lowercase ASCII words with `_`; lists are comma
//! separated. Rendering sorts keys, so two equal configs render to the same
//! text and hash to the same id.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ipc_core::ensemble::config_hash;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

pub fn valid_key(key: &str) -> bool {
    !key.is_empty() && key.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

pub fn valid_value(value: &str) -> bool {
    !value.contains(['\n', '\r', '#']) && value.trim() == value
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = KvConfig::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(CliError::Usage(format!("line {}: bad key {k:?}", i + 1)));
            }
            if cfg.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Usage(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        config_hash(&self.render())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        debug_assert!(valid_key(key) && valid_value(&value), "{key} = {value:?}");
        self.entries.insert(key.to_string(), value);
    }

    /// Sets `key` only when `value` is given.
    pub fn set_opt<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn set_list<T: Display>(&mut self, key: &str, values: &[T]) {
        let v: Vec<String> = values.iter().map(|x| x.to_string()).collect();
        self.set(key, v.join(","));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Usage(format!("{key} = {v:?}: {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|x| x.trim().parse::<T>().map_err(|e| CliError::Usage(format!("{key} = {v:?}: {e}"))))
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Rejects keys outside `allowed`, so typos do not pass silently.
    pub fn only(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(CliError::Usage(format!("unknown setting `{k}`; expected one of {allowed:?}"))),
            None => Ok(()),
        }
    }
}

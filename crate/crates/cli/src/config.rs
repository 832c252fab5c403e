//! Flat `key = value` config files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::manifest::RunManifest;

/// Problems the user can fix by changing the invocation; exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`, got `{line}`", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(UsageError(format!("config line {}: empty key", i + 1)));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(UsageError(format!("config line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(map)
}

/// Reads a flat config file, or the resolved config of a run manifest
/// written by an earlier run of `command`.
pub fn load(path: &Path, command: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| UsageError(format!("run manifest {}: {e}", path.display())))?;
        if m.command != command {
            return Err(UsageError(format!(
                "run manifest {} is for `{}`, not `{command}`",
                path.display(),
                m.command
            )));
        }
        return Ok(m.config);
    }
    parse_flat(&text)
}

/// Resolves each setting as flag, else config file, else default, and
/// records the outcome for the run manifest.
#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    pub resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            resolved: BTreeMap::new(),
        }
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>, UsageError>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| UsageError(format!("config `{key} = {raw}`: {e}"))),
        }
    }

    pub fn opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, UsageError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn or<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, UsageError>
    where
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, UsageError>
    where
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| UsageError(format!("missing required `--{key}` (flag or config key)")))
    }

    /// Boolean switch: set by the flag or a true config value.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, UsageError> {
        let v = flag || self.from_file::<bool>(key)?.unwrap_or(false);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Rejects config keys that no setting consumed.
    pub fn finish(&self) -> Result<(), UsageError> {
        let unknown: Vec<&str> = self
            .file
            .keys()
            .filter(|k| !self.resolved.contains_key(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(UsageError(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

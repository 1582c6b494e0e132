//! `key=value` configuration files for `solve`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Keys a config file may set. They mirror the long flag names of `solve`.
pub const KEYS: &[&str] = &[
    "algo",
    "instance",
    "format",
    "name",
    "runs",
    "seed",
    "nepochs",
    "niters",
    "tmin",
    "tmax",
    "theta-min",
    "theta-max",
    "d",
    "epsilon",
    "time-limit",
    "emit-bounds",
    "out",
    "workers",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected key=value, got `{}`", n + 1, raw.trim());
            };
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key `{}`", n + 1, k.trim());
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.values.get(key).map(String::as_str) {
            None => Ok(false),
            Some("1" | "true" | "yes" | "on") => Ok(true),
            Some("0" | "false" | "no" | "off") => Ok(false),
            Some(other) => bail!("config key `{key}`: expected a boolean, got `{other}`"),
        }
    }
}

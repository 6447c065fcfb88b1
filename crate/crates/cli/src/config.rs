//! `key = value` settings merged from a config file and command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Every key a config file may contain. Flags use the same names with `.`
/// written as `-`.
pub const KEYS: &[&str] = &[
    "input",
    "out",
    "width",
    "height",
    "frames",
    "qp",
    "gop",
    "tools",
    "weights",
    "bim.enabled",
    "bim.sigma",
    "bim.thresholds",
    "max-depth",
    "search-range",
    "stats",
    "md5",
    "expect-md5",
    "recon",
    "curves",
    "anchor",
    "report",
    "qps",
    "toolsets",
    "fps",
    "steps",
    "step-size",
    "batch",
    "patch",
    "seed",
    "net.width",
    "net.blocks",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn parse_config(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", origin.display(), n + 1))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            bail!("{}:{}: unknown config key `{key}`", origin.display(), n + 1);
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    /// Reads `config` if given, then applies the flags that were set.
    pub fn load(config: Option<&Path>, flags: &[(&str, Option<&String>)]) -> Result<Settings> {
        let mut values = match config {
            Some(path) => {
                let text =
                    fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
                parse_config(&text, path)?
            }
            None => BTreeMap::new(),
        };
        for (key, value) in flags {
            debug_assert!(KEYS.contains(key), "{key}");
            if let Some(v) = value {
                values.insert(key.to_string(), v.to_string());
            }
        }
        Ok(Settings { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            anyhow!(
                "missing setting `{key}` (flag --{} or config key {key})",
                key.replace('.', "-")
            )
        })
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("invalid value {v:?} for `{key}`: {e}"))
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.require(key)?;
        Ok(self.parse(key)?.expect("present"))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| anyhow!("invalid value {s:?} in `{key}`: {e}"))
                    })
                    .collect()
            })
            .transpose()
    }

    /// An existing file.
    pub fn input_file(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.require(key)?);
        if !p.is_file() {
            bail!("`{key}`: {} is not a readable file", p.display());
        }
        Ok(p)
    }

    /// An existing directory, if the key is set.
    pub fn input_dir(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.get(key) {
            Some(v) => {
                let p = PathBuf::from(v);
                if !p.is_dir() {
                    bail!("`{key}`: {} is not a directory", p.display());
                }
                Ok(Some(p))
            }
            None => Ok(None),
        }
    }

    /// A path whose parent directory exists, if the key is set.
    pub fn output_path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.get(key) {
            Some(v) => {
                let p = PathBuf::from(v);
                let parent = p
                    .parent()
                    .filter(|d| !d.as_os_str().is_empty())
                    .unwrap_or(Path::new("."));
                if !parent.is_dir() {
                    bail!("`{key}`: directory {} does not exist", parent.display());
                }
                Ok(Some(p))
            }
            None => Ok(None),
        }
    }
}

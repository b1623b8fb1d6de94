//! Flat `key = value` configuration with `[section]` headers.
//!
//! Keys are the long flag names (`eta-max`, underscores accepted). Lists are
//! comma-separated. `#` and `;` start comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Keys accepted in each section.
const SECTIONS: &[(&str, &[&str])] = &[
    ("output", &["out", "format"]),
    (
        "params",
        &[
            "p",
            "n",
            "alpha",
            "rel-tol",
            "abs-tol",
            "eta-max",
            "max-frequency",
            "quiescent-amplitude",
            "resolve-to",
            "mode",
        ],
    ),
    ("solve", &[]),
    ("decay", &["window", "slack"]),
    ("zeros", &["min-zeros"]),
    ("energy", &["eta-alpha-limit"]),
    ("continuity", &["deltas", "limit"]),
    (
        "pde-check",
        &["r-max", "r-points", "t-max", "t-points", "t-offset", "literal-factor", "min-ratio"],
    ),
    (
        "cpplus",
        &["ms", "eta-star", "g", "horizon", "r-max", "r-points", "t-steps", "probes", "seed"],
    ),
    ("sweep", &["alphas", "window", "slack", "min-zeros"]),
    ("sigma", &["m"]),
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<(String, String), String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = lineno + 1;
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = normalise(name);
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    bail!("line {at}: unknown section [{name}]");
                }
                section = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {at}: expected `key = value`"))?;
            let sec = section
                .clone()
                .ok_or_else(|| anyhow!("line {at}: key outside any [section]"))?;
            let key = normalise(key);
            let known = SECTIONS
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(_, keys)| keys.contains(&key.as_str()))
                .unwrap_or(false);
            if !known {
                bail!("line {at}: unknown key `{key}` in [{sec}]");
            }
            if values.insert((sec.clone(), key.clone()), value.trim().to_string()).is_some() {
                bail!("line {at}: duplicate key `{key}` in [{sec}]");
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    /// The flag if given, else the file value if present.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(section, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("[{section}] {key} = {v}: {e}"))
            })
            .transpose()
    }

    /// As [`pick`](Self::pick) for comma-separated lists; an empty value is
    /// an empty list.
    pub fn pick_list<T: FromStr>(&self, flag: Option<&str>, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = flag.or_else(|| self.raw(section, key)) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| anyhow!("{key}: `{s}`: {e}")))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

fn normalise(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace('_', "-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let cfg = ConfigFile::parse(
            "# reference\n[params]\np = 0.25\neta_max = 40 ; comment\n[cpplus]\nms = 1, 2,4\n",
        )
        .unwrap();
        assert_eq!(cfg.pick::<f64>(None, "params", "p").unwrap(), Some(0.25));
        assert_eq!(cfg.pick(Some(0.5), "params", "p").unwrap(), Some(0.5));
        assert_eq!(cfg.pick::<f64>(None, "params", "eta-max").unwrap(), Some(40.0));
        assert_eq!(cfg.pick::<f64>(None, "params", "alpha").unwrap(), None);
        assert_eq!(cfg.pick_list::<u32>(None, "cpplus", "ms").unwrap(), Some(vec![1, 2, 4]));
        assert_eq!(cfg.pick_list::<u32>(Some("8"), "cpplus", "ms").unwrap(), Some(vec![8]));
        assert_eq!(cfg.pick_list::<f64>(Some(""), "sweep", "alphas").unwrap(), Some(vec![]));
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(ConfigFile::parse("p = 1").is_err());
        assert!(ConfigFile::parse("[nope]").is_err());
        assert!(ConfigFile::parse("[params]\nq = 1").is_err());
        assert!(ConfigFile::parse("[params]\np").is_err());
        assert!(ConfigFile::parse("[params]\np = 1\np = 2").is_err());
        let cfg = ConfigFile::parse("[params]\np = x").unwrap();
        assert!(cfg.pick::<f64>(None, "params", "p").is_err());
    }
}

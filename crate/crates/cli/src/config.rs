//! Experiment configuration: ordered `key = value` text with provenance.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use spinobs::rational::{parse_rational, Rational};

/// Where a configuration entry came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    /// 1-based line of a configuration file.
    Line(usize),
    /// A command-line flag.
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(l) => write!(f, "line {l}"),
            Origin::Flag(name) => write!(f, "argument --{}", name.replace('_', "-")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{origin}: {message}")]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

impl ConfigError {
    pub fn new(origin: Origin, message: impl Into<String>) -> Self {
        ConfigError {
            origin,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub origin: Origin,
}

/// Configuration of one experiment. The `command` key names the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, Entry>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty() && key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line(i + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(origin.clone(), format!("expected 'key = value', found '{line}'")))?;
            cfg.insert(key.trim(), value.trim(), origin)?;
        }
        Ok(cfg)
    }

    pub fn insert(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        if !valid_key(key) {
            return Err(ConfigError::new(origin, format!("malformed key '{key}'")));
        }
        if value.is_empty() {
            return Err(ConfigError::new(origin, format!("key '{key}' has an empty value")));
        }
        if value.contains('#') || value.contains('\n') {
            return Err(ConfigError::new(origin, format!("value of '{key}' may not contain '#' or newlines")));
        }
        if let Some(prev) = self.entries.get(key) {
            return Err(ConfigError::new(origin, format!("duplicate key '{key}' (first set at {})", prev.origin)));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                origin,
            },
        );
        Ok(())
    }

    /// Sets a value given on the command line.
    pub fn set_flag(&mut self, key: &str, value: impl ToString) -> Result<(), ConfigError> {
        self.insert(key, &value.to_string(), Origin::Flag(key.to_string()))
    }

    pub fn remove(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn command(&self) -> Result<&str, ConfigError> {
        self.entries
            .get("command")
            .map(|e| e.value.as_str())
            .ok_or_else(|| ConfigError::new(Origin::Line(1), "missing key 'command'"))
    }

    /// Canonical text: `command` first, then keys in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(e) = self.entries.get("command") {
            out.push_str(&format!("command = {}\n", e.value));
        }
        for (k, e) in &self.entries {
            if k != "command" {
                out.push_str(&format!("{k} = {}\n", e.value));
            }
        }
        out
    }

    /// Rejects keys outside `allowed` (plus `command`).
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for (k, e) in &self.entries {
            if k != "command" && !allowed.contains(&k.as_str()) {
                let mut known: Vec<&str> = allowed.to_vec();
                known.sort_unstable();
                return Err(ConfigError::new(
                    e.origin.clone(),
                    format!("unknown key '{k}' for command '{}'; expected one of: {}", self.command()?, known.join(", ")),
                ));
            }
        }
        Ok(())
    }

    fn origin_of(&self, key: &str) -> Origin {
        self.entries
            .get(key)
            .map(|e| e.origin.clone())
            .unwrap_or_else(|| Origin::Flag(key.to_string()))
    }

    pub fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::new(self.origin_of(key), message)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.str(key).ok_or_else(|| {
            let cmd = self.str("command").unwrap_or("?");
            ConfigError::new(Origin::Flag(key.to_string()), format!("command '{cmd}' requires key '{key}'"))
        })
    }

    pub fn rational(&self, key: &str) -> Result<Option<Rational>, ConfigError> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        parse_rational(&e.value).map(Some).map_err(|err| {
            ConfigError::new(
                e.origin.clone(),
                format!("key '{key}': malformed rational '{}' at column {}: {}", e.value, err.column, err.message),
            )
        })
    }

    pub fn require_rational(&self, key: &str) -> Result<Rational, ConfigError> {
        self.require(key)?;
        Ok(self.rational(key)?.expect("checked above"))
    }

    pub fn parse_num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        e.value
            .parse::<T>()
            .map(Some)
            .map_err(|_| ConfigError::new(e.origin.clone(), format!("key '{key}': expected a number, found '{}'", e.value)))
    }

    pub fn num_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.parse_num(key)?.unwrap_or(default))
    }

    pub fn require_num<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.require(key)?;
        Ok(self.parse_num(key)?.expect("checked above"))
    }

    /// Value restricted to a fixed vocabulary.
    pub fn choice<'a>(&'a self, key: &str, options: &[&str], default: Option<&'a str>) -> Result<&'a str, ConfigError> {
        let v = match (self.str(key), default) {
            (Some(v), _) => v,
            (None, Some(d)) => return Ok(d),
            (None, None) => self.require(key)?,
        };
        if options.contains(&v) {
            Ok(v)
        } else {
            Err(self.err(key, format!("key '{key}': expected one of {}, found '{v}'", options.join("|"))))
        }
    }

    /// Checks that every key in `inputs` names an existing file.
    pub fn check_inputs(&self, inputs: &[&str]) -> Result<(), ConfigError> {
        for key in inputs {
            if let Some(e) = self.entries.get(*key) {
                if !Path::new(&e.value).is_file() {
                    return Err(ConfigError::new(e.origin.clone(), format!("key '{key}': file '{}' does not exist", e.value)));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_canonical_text() {
        let cfg = ExperimentConfig::parse("# c\nseed = 4\ncommand = exact\n\nbeta=2 # two\n").unwrap();
        assert_eq!(cfg.to_text(), "command = exact\nbeta = 2\nseed = 4\n");
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap().to_text(), cfg.to_text());
    }

    #[test]
    fn errors_carry_lines() {
        let e = ExperimentConfig::parse("command = exact\nbeta = 1\nbeta = 2\n").unwrap_err();
        assert_eq!(e.origin, Origin::Line(3));
        let e = ExperimentConfig::parse("command = exact\nnonsense\n").unwrap_err();
        assert_eq!(e.origin, Origin::Line(2));
        let cfg = ExperimentConfig::parse("command = exact\n\nbeta = 2//3\n").unwrap();
        let e = cfg.rational("beta").unwrap_err();
        assert_eq!(e.to_string(), "line 3: key 'beta': malformed rational '2//3' at column 3: malformed denominator");
    }
}

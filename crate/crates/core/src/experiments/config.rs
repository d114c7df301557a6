use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Flat key/value parameters of one named experiment.
///
/// Values are held as text. Precedence is built-in defaults, then a config
/// file, then individual overrides; only keys present in the defaults are
/// accepted. The merged record is written into every artifact header.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    params: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn with_defaults(name: &str, seed: u64, defaults: &[(&str, &str)]) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            seed,
            params: defaults
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Overrides one existing key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => {
                self.seed = value.trim().parse().map_err(|_| {
                    Error::param(format!(
                        "seed must be a non-negative integer, got '{value}'"
                    ))
                })?;
                Ok(())
            }
            "experiment" => {
                if value == self.name {
                    Ok(())
                } else {
                    Err(Error::param(format!(
                        "config is for experiment '{value}', not '{}'",
                        self.name
                    )))
                }
            }
            _ => match self.params.get_mut(key) {
                Some(slot) => {
                    *slot = value.trim().to_string();
                    Ok(())
                }
                None => Err(Error::param(format!(
                    "unknown key '{key}' for experiment '{}' (known: {})",
                    self.name,
                    self.params.keys().cloned().collect::<Vec<_>>().join(", ")
                ))),
            },
        }
    }

    /// Applies `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::param(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    /// Applies every key of a config text (see [`parse_config_text`]).
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_config_text(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.params
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::param(format!("missing key '{key}'")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get_str(key)?;
        raw.parse()
            .map_err(|_| Error::param(format!("bad value '{raw}' for key '{key}'")))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get_str(key)?;
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::param(format!("bad list entry '{t}' for key '{key}'")))
            })
            .collect()
    }

    /// `# key = value` lines (TOML-compatible after stripping `# `), sorted,
    /// experiment and seed first.
    pub fn header_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("# experiment = {}", toml_literal(&self.name)),
            format!("# seed = {}", self.seed),
        ];
        for (k, v) in &self.params {
            out.push(format!("# {k} = {}", toml_literal(v)));
        }
        out
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.header_lines() {
            writeln!(f, "{}", &line[2..])?;
        }
        Ok(())
    }
}

/// Numbers and booleans stay bare; everything else is a quoted string.
fn toml_literal(v: &str) -> String {
    let bare = v == "true"
        || v == "false"
        || (v.parse::<f64>().is_ok_and(f64::is_finite) && !v.contains(['_', 'x', 'o', 'b']));
    if bare && !v.starts_with('+') && !v.starts_with('.') && !v.ends_with('.') {
        v.to_string()
    } else {
        format!("{:?}", v)
    }
}

/// Reads `key = value` pairs from a TOML file, or from the `# key = value`
/// header of an artifact written by this crate.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let header: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter(|l| l.contains('='))
        .collect();
    let body = if header.is_empty() {
        text.to_string()
    } else {
        header.join("\n")
    };
    let table: toml::Table = body
        .parse()
        .map_err(|e: toml::de::Error| Error::Parse(format!("config: {}", e.message())))?;
    table
        .into_iter()
        .map(|(k, v)| {
            let s = match v {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(x) => x.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                other => {
                    return Err(Error::param(format!(
                        "key '{k}' has unsupported value {other}"
                    )))
                }
            };
            Ok((k, s))
        })
        .collect()
}

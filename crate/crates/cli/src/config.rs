//! Flat `key = value` run configuration; command-line flags take precedence.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "model",
    "models",
    "g",
    "beta",
    "beta_grid",
    "lambda",
    "lambda_grid",
    "beta_range",
    "nodes",
    "samples",
    "seed",
    "threads",
    "estimator",
    "backend",
    "replicas",
    "sweeps",
    "burn_in",
    "thinning",
    "sigmas",
    "sup_norm",
    "out_json",
    "out_csv",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {}: expected key = value", no + 1)));
            };
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key '{}'", no + 1, k.trim())));
            }
            values.insert(key, v.trim().trim_matches('"').to_string());
        }
        Ok(Config { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if given, else the parsed config value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key {key}: invalid value '{v}': {e}")))
            })
            .transpose()
    }

    /// Like [`Config::pick`] but the value must be present; `flag` names
    /// the command-line flag in the error.
    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str, flag_name: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing required flag {flag_name} (or config key {key})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prefers_flags() {
        let c = Config::parse("# run\nmodel = sk:6\nbeta=0.7\nburn-in = 10\n\n").unwrap();
        assert_eq!(c.get("model"), Some("sk:6"));
        assert_eq!(c.pick::<f64>(None, "beta").unwrap(), Some(0.7));
        assert_eq!(c.pick(Some(0.5), "beta").unwrap(), Some(0.5));
        assert_eq!(c.pick::<u64>(None, "burn_in").unwrap(), Some(10));
        assert!(c.require::<u64>(None, "seed", "--seed").is_err());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Config::parse("model sk:6").is_err());
        assert!(Config::parse("colour = red").is_err());
        let c = Config::parse("beta = hot").unwrap();
        assert!(c.pick::<f64>(None, "beta").is_err());
    }
}

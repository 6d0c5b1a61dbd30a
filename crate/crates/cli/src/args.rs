//! Minimal `--flag value` argument parsing for the subcommands.

use std::collections::BTreeMap;

use akb_core::error::{Error, Result};

pub struct Args {
    pub command: String,
    flags: BTreeMap<String, String>,
}

impl Args {
    pub fn parse(mut argv: impl Iterator<Item = String>) -> Result<Args> {
        let command = argv
            .next()
            .ok_or_else(|| Error::InvalidConfig("missing subcommand; try 'akb help'".into()))?;
        let mut flags = BTreeMap::new();
        let mut pending: Option<String> = None;
        for arg in argv {
            if let Some(key) = pending.take() {
                flags.insert(key, arg);
                continue;
            }
            if let Some(stripped) = arg.strip_prefix("--") {
                if let Some((k, v)) = stripped.split_once('=') {
                    flags.insert(k.to_string(), v.to_string());
                } else {
                    pending = Some(stripped.to_string());
                }
            } else {
                return Err(Error::InvalidConfig(format!(
                    "unexpected positional argument '{arg}'"
                )));
            }
        }
        if let Some(key) = pending {
            // Trailing boolean-style flag.
            flags.insert(key, "true".to_string());
        }
        Ok(Args { command, flags })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.flags.get(key).map(String::as_str)
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("--{key} expects a number, got '{v}'"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::InvalidConfig(format!("--{key} expects an integer, got '{v}'"))
            }),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.u64_or(key, default as u64)? as usize)
    }

    pub fn list_f64(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| {
                        Error::InvalidConfig(format!("--{key} expects numbers, got '{s}'"))
                    })
                })
                .collect(),
        }
    }

    pub fn list_usize(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| {
                        Error::InvalidConfig(format!("--{key} expects integers, got '{s}'"))
                    })
                })
                .collect(),
        }
    }
}

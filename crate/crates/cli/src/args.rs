//! Minimal argument parsing: positionals, `--flag value` pairs, and bare
//! boolean switches.

use std::collections::{BTreeMap, BTreeSet};

use suss_core::{Error, Result};

/// Flags that never take a value.
const SWITCHES: &[&str] = &["ranked", "symmetric", "lenient", "help"];

#[derive(Debug, Default)]
pub struct Args {
    pub positionals: Vec<String>,
    values: BTreeMap<String, String>,
    switches: BTreeSet<String>,
}

impl Args {
    pub fn parse(raw: &[String]) -> Result<Args> {
        let mut args = Args::default();
        let mut it = raw.iter().peekable();
        while let Some(arg) = it.next() {
            if let Some(name) = arg.strip_prefix("--") {
                if SWITCHES.contains(&name) {
                    args.switches.insert(name.to_string());
                } else {
                    let value = it.next().ok_or_else(|| {
                        Error::Invalid(format!("flag --{name} expects a value"))
                    })?;
                    args.values.insert(name.to_string(), value.clone());
                }
            } else {
                args.positionals.push(arg.clone());
            }
        }
        Ok(args)
    }

    pub fn value(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    pub fn require(&self, name: &str) -> Result<&str> {
        self.value(name)
            .ok_or_else(|| Error::Invalid(format!("missing required flag --{name}")))
    }

    pub fn switch(&self, name: &str) -> bool {
        self.switches.contains(name)
    }

    pub fn u64_value(&self, name: &str) -> Result<Option<u64>> {
        self.value(name)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Invalid(format!("--{name} expects an integer, got '{v}'")))
            })
            .transpose()
    }

    pub fn usize_value(&self, name: &str) -> Result<Option<usize>> {
        self.value(name)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Invalid(format!("--{name} expects an integer, got '{v}'")))
            })
            .transpose()
    }

    pub fn f64_value(&self, name: &str) -> Result<Option<f64>> {
        self.value(name)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Invalid(format!("--{name} expects a number, got '{v}'")))
            })
            .transpose()
    }
}

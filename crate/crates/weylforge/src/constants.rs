//! Calibrated constants, read from the versioned `constants.txt` at the
//! workspace root. The file is embedded at build time; a different file can
//! be loaded at run time.

use std::collections::BTreeMap;
use std::path::Path;

use crate::{Error, Result};

pub const EMBEDDED: &str = include_str!("../../../constants.txt");

#[derive(Clone, Debug, PartialEq)]
pub struct Constants {
    pub version: u32,
    values: BTreeMap<String, f64>,
}

impl Constants {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut version = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("constants line {}: missing '='", lineno + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "version" {
                version = Some(v.parse::<u32>().map_err(|_| {
                    Error::InvalidArgument(format!("constants version '{v}'"))
                })?);
                continue;
            }
            let x: f64 = v.parse().map_err(|_| {
                Error::InvalidArgument(format!("constants line {}: '{v}' is not a number", lineno + 1))
            })?;
            if values.insert(k.to_string(), x).is_some() {
                return Err(Error::InvalidArgument(format!("constant '{k}' defined twice")));
            }
        }
        let version =
            version.ok_or_else(|| Error::InvalidArgument("constants file has no version".into()))?;
        Ok(Constants { version, values })
    }

    pub fn embedded() -> Self {
        Self::parse(EMBEDDED).expect("embedded constants file is well formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.values
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown constant '{key}'")))
    }

    /// Panics on a missing key. For tests and experiment code paths where a
    /// missing constant is a build defect.
    pub fn c(&self, key: &str) -> f64 {
        self.get(key).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }
}

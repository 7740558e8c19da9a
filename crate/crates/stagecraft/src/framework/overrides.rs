//! Command-line experiment overrides.
//!
//! Experiments are defined in code, but small knobs (a penalty, a seed, a
//! stage budget) are worth turning without recompiling. A [`ParamBag`]
//! carries `key=value` strings from the CLI into an experiment builder; the
//! builder reads the keys it understands, and anything left unread at the
//! end is reported as an error so typos never pass silently.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// String-typed override parameters with typed, defaulted accessors.
#[derive(Debug, Clone, Default)]
pub struct ParamBag {
    values: BTreeMap<String, String>,
    read: std::cell::RefCell<Vec<String>>,
}

impl ParamBag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` pairs as passed on a command line.
    pub fn from_pairs(pairs: &[String]) -> Result<Self> {
        let mut bag = Self::new();
        for pair in pairs {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::Override(format!("override '{pair}' is not of the form key=value"))
            })?;
            if key.is_empty() {
                return Err(Error::Override(format!("override '{pair}' has an empty key")));
            }
            if bag.values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Override(format!("override key '{key}' given twice")));
            }
        }
        Ok(bag)
    }

    fn fetch(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key)?;
        self.read.borrow_mut().push(key.to_string());
        Some(v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, raw: &str, ty: &str) -> Result<T> {
        raw.parse().map_err(|_| {
            Error::Override(format!("override '{key}={raw}' is not a valid {ty}"))
        })
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.fetch(key) {
            Some(raw) => self.parse(key, &raw.to_string(), "number"),
            None => Ok(default),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.fetch(key) {
            Some(raw) => self.parse(key, &raw.to_string(), "count"),
            None => Ok(default),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.fetch(key) {
            Some(raw) => self.parse(key, &raw.to_string(), "integer"),
            None => Ok(default),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.fetch(key) {
            Some(raw) => self.parse(key, &raw.to_string(), "boolean (true/false)"),
            None => Ok(default),
        }
    }

    pub fn get_string(&self, key: &str, default: &str) -> String {
        self.fetch(key).map(str::to_string).unwrap_or_else(|| default.to_string())
    }

    /// Fails if any provided key was never read by the experiment builder.
    pub fn finish(&self) -> Result<()> {
        let read = self.read.borrow();
        let unread: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !read.iter().any(|r| r == *k))
            .map(|k| k.as_str())
            .collect();
        if unread.is_empty() {
            Ok(())
        } else {
            Err(Error::Override(format!(
                "unknown override key(s): {} (this experiment does not read them)",
                unread.join(", ")
            )))
        }
    }
}

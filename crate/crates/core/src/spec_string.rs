//! Parsing of the compact `name:key=value,key=value` strings used on the
//! command line and in JSON configs (`power:s=1.5`, `disk:R=100`, ...).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SpecString<'a> {
    pub name: &'a str,
    /// Parameters in input order; positional entries have an empty key.
    pub params: Vec<(&'a str, &'a str)>,
}

impl<'a> SpecString<'a> {
    pub fn parse(input: &'a str) -> Result<Self> {
        let input = input.trim();
        if input.is_empty() {
            return Err(Error::Parse("empty specification".into()));
        }
        let (name, rest) = match input.split_once(':') {
            Some((n, r)) => (n.trim(), Some(r)),
            None => (input, None),
        };
        let mut params = Vec::new();
        if let Some(rest) = rest {
            for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match item.split_once('=') {
                    Some((k, v)) => params.push((k.trim(), v.trim())),
                    None => params.push(("", item)),
                }
            }
        }
        Ok(Self { name, params })
    }

    pub fn get(&self, key: &str) -> Option<&'a str> {
        self.params.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| *v)
    }

    pub fn number(&self, key: &str) -> Result<f64> {
        let raw = self.get(key).ok_or_else(|| Error::Parse(format!("`{}` requires parameter `{key}`", self.name)))?;
        parse_number(raw, key)
    }

    pub fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(raw) => parse_number(raw, key),
            None => Ok(default),
        }
    }

    pub fn positional(&self) -> Vec<&'a str> {
        self.params.iter().filter(|(k, _)| k.is_empty()).map(|(_, v)| *v).collect()
    }

    /// Rejects keys outside `allowed` (positional entries are always allowed).
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.params {
            if !k.is_empty() && !allowed.iter().any(|a| a.eq_ignore_ascii_case(k)) {
                return Err(Error::Parse(format!("unknown parameter `{k}` for `{}`", self.name)));
            }
        }
        Ok(())
    }
}

pub(crate) fn parse_number(raw: &str, what: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse(format!("`{what}`: cannot parse `{raw}` as a number")))
}

/// Comma-separated list of numbers, e.g. `1,2,4,8`.
pub(crate) fn parse_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_number(s, what)).collect()
}

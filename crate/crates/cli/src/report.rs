use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn digest(bytes: Option<&[u8]>) -> String {
    match bytes {
        Some(b) => format!("sha256:{:x}", Sha256::digest(b)),
        None => "none".to_string(),
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: String,
    pub tolerance: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Report {
    pub command: String,
    pub input_digest: String,
    pub results: BTreeMap<String, String>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(command: String, input_digest: String) -> Self {
        Self { command, input_digest, results: BTreeMap::new(), checks: Vec::new() }
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.results.insert(key.to_string(), fmt17(v));
    }

    pub fn vector(&mut self, key: &str, v: &[f64]) {
        for (i, x) in v.iter().enumerate() {
            self.value(&format!("{key}[{i}]"), *x);
        }
    }

    pub fn text(&mut self, key: &str, v: impl ToString) {
        self.results.insert(key.to_string(), v.to_string());
    }

    /// Records `value < tolerance`.
    pub fn below(&mut self, name: &str, value: f64, tolerance: f64) -> bool {
        let pass = value < tolerance;
        self.checks.push(Check { name: name.to_string(), pass, value: fmt17(value), tolerance: fmt17(tolerance) });
        pass
    }

    /// Records `value >= bound`.
    pub fn at_least(&mut self, name: &str, value: f64, bound: f64) -> bool {
        let pass = value >= bound;
        self.checks.push(Check { name: name.to_string(), pass, value: fmt17(value), tolerance: format!(">= {}", fmt17(bound)) });
        pass
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

//! One-line machine-parsable command summaries.
//!
//! Grammar: `<command> <key>=<value> ...`, space-separated. Keys are
//! `[a-z0-9_]+`; a value containing whitespace or `"` is emitted as a Rust
//! debug-quoted string, so the line always splits unambiguously on spaces
//! outside quotes.

use std::fmt;

pub struct Summary {
    command: &'static str,
    fields: Vec<(&'static str, String)>,
}

impl Summary {
    pub fn new(command: &'static str) -> Self {
        Summary { command, fields: Vec::new() }
    }

    pub fn push(mut self, key: &'static str, value: impl fmt::Display) -> Self {
        let raw = value.to_string();
        let quoted = if raw.chars().any(|c| c.is_whitespace() || c == '"') || raw.is_empty() {
            format!("{raw:?}")
        } else {
            raw
        };
        self.fields.push((key, quoted));
        self
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.command)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

//! Flat key-value documents: the machine-readable output format. Floats are
//! written in shortest round-trip decimal so re-reading reproduces every
//! numeric field bit-exactly.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        KvDoc::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl std::fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), format!("{value}")));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<KvDoc> {
        let mut doc = KvDoc::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            doc.push(k.trim().to_string(), v.trim().to_string());
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_floats_bit_exactly() {
        let mut doc = KvDoc::new();
        let values = [
            0.1 + 0.2,
            std::f64::consts::PI,
            1e-308,
            -3.337778,
            f64::MAX,
        ];
        for (i, v) in values.iter().enumerate() {
            doc.push_f64(format!("v{i}"), *v);
        }
        let text = doc.render();
        let back = KvDoc::parse(&text).unwrap();
        for (i, v) in values.iter().enumerate() {
            let got = back.get_f64(&format!("v{i}")).unwrap();
            assert_eq!(got.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn parse_rejects_malformed_lines() {
        assert!(KvDoc::parse("just some text").is_err());
        assert!(KvDoc::parse("# comment\nkey = ok").is_ok());
    }
}

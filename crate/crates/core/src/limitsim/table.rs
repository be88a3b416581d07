//! Cached empirical null samples with a fully keyed text representation.

use crate::error::{Error, Result};
use crate::numcore::quantile_index;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Everything that determines a simulated null distribution. Any field
/// change forces resimulation; tables are never interpolated across keys.
#[derive(Clone, Debug, PartialEq)]
pub struct TableKey {
    pub family: String,
    pub p: usize,
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub lambda_steps: usize,
    pub reps: usize,
    pub seed: u64,
    pub q_digest: u64,
}

impl TableKey {
    pub fn header_line(&self) -> String {
        format!(
            "family={} p={} k={} lo={} hi={} step={} lambda_steps={} reps={} seed={} qdigest={}",
            self.family,
            self.p,
            self.k,
            self.lo,
            self.hi,
            self.step,
            self.lambda_steps,
            self.reps,
            self.seed,
            self.q_digest
        )
    }

    pub fn parse_header(line: &str) -> Result<TableKey> {
        let mut fields = std::collections::HashMap::new();
        for part in line.split_whitespace() {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::BadTable(format!("malformed header field `{part}`")))?;
            fields.insert(name.to_string(), value.to_string());
        }
        let get = |name: &str| -> Result<String> {
            fields
                .get(name)
                .cloned()
                .ok_or_else(|| Error::BadTable(format!("missing header field `{name}`")))
        };
        Ok(TableKey {
            family: get("family")?,
            p: parse(&get("p")?)?,
            k: parse(&get("k")?)?,
            lo: parse(&get("lo")?)?,
            hi: parse(&get("hi")?)?,
            step: parse(&get("step")?)?,
            lambda_steps: parse(&get("lambda_steps")?)?,
            reps: parse(&get("reps")?)?,
            seed: parse(&get("seed")?)?,
            q_digest: parse(&get("qdigest")?)?,
        })
    }

    /// Stable file name for on-disk caching.
    pub fn file_name(&self) -> String {
        format!("{}-{:016x}.cvt", self.family, fnv1a(self.header_line().as_bytes()))
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::BadTable(format!("unparseable header value `{s}`")))
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Sorted empirical null sample with its generating key.
#[derive(Clone, Debug)]
pub struct CriticalValueTable {
    pub key: TableKey,
    samples: Vec<f64>,
}

impl CriticalValueTable {
    pub fn new(key: TableKey, mut samples: Vec<f64>) -> Self {
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        CriticalValueTable { key, samples }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Empirical (1 - alpha) quantile with the ceiling index convention.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in (0,1), got {alpha}"
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::BadTable("empty table".into()));
        }
        Ok(self.samples[quantile_index(self.samples.len(), 1.0 - alpha)])
    }

    /// Finite-sample Monte Carlo p-value `(1 + #{samples >= observed}) /
    /// (reps + 1)`.
    pub fn p_value(&self, observed: f64) -> f64 {
        let below = self.samples.partition_point(|&s| s < observed);
        let ge = self.samples.len() - below;
        (1.0 + ge as f64) / (self.samples.len() as f64 + 1.0)
    }

    /// Write as a delimited text file: one header line with the full key,
    /// then one sample per line in shortest round-trip decimal.
    pub fn write_to_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", self.key.header_line())?;
        for s in &self.samples {
            writeln!(out, "{s}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from_path(path: &Path) -> Result<CriticalValueTable> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::BadTable("empty file".into()))??;
        let key = TableKey::parse_header(&header)?;
        let mut samples = Vec::with_capacity(key.reps);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::BadTable(format!("bad sample line `{line}`")))?,
            );
        }
        if samples.len() != key.reps {
            return Err(Error::BadTable(format!(
                "expected {} samples, found {}",
                key.reps,
                samples.len()
            )));
        }
        Ok(CriticalValueTable::new(key, samples))
    }
}

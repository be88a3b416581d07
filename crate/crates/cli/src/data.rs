//! CSV ingestion: comma-delimited numeric columns with a header line. Rows
//! with missing cells are dropped with a count warning; unparseable cells
//! are hard errors naming the offending row and column.

use anyhow::{bail, Context, Result};
use std::path::Path;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    /// Values of a column named "date", kept as row labels.
    pub labels: Option<Vec<String>>,
    /// Number of rows dropped because of missing cells.
    pub dropped: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|c| c == name)
            .map(|i| self.columns[i].as_slice())
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    ingest_csv_text(&text)
}

pub fn ingest_csv_text(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().context("empty file")?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.is_empty() {
        bail!("header has no columns");
    }
    let date_col = names.iter().position(|n| n.eq_ignore_ascii_case("date"));

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len() - date_col.map_or(0, |_| 1)];
    let mut labels: Vec<String> = Vec::new();
    let mut dropped = 0usize;
    let mut any_row = false;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        any_row = true;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            bail!(
                "row {}: expected {} cells, found {}",
                lineno + 1,
                names.len(),
                cells.len()
            );
        }
        if cells
            .iter()
            .enumerate()
            .any(|(j, c)| Some(j) != date_col && is_missing(c))
        {
            dropped += 1;
            continue;
        }
        let mut parsed = Vec::with_capacity(columns.len());
        let mut label = None;
        for (j, cell) in cells.iter().enumerate() {
            if Some(j) == date_col {
                label = Some(cell.trim().to_string());
                continue;
            }
            let v: f64 = cell.trim().parse().with_context(|| {
                format!("row {}, column `{}`: unparseable cell `{cell}`", lineno + 1, names[j])
            })?;
            parsed.push(v);
        }
        for (col, v) in columns.iter_mut().zip(parsed) {
            col.push(v);
        }
        if let Some(l) = label {
            labels.push(l);
        }
    }
    if !any_row || columns.first().is_none_or(|c| c.is_empty()) {
        bail!("no data rows after ingestion");
    }
    let names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != date_col)
        .map(|(_, n)| n.clone())
        .collect();
    Ok(Dataset {
        names,
        columns,
        labels: date_col.map(|_| labels),
        dropped,
    })
}

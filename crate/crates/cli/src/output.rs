use std::fs;
use std::path::Path;

use serde::Serialize;

/// A CSV file: header (names with units in brackets) and formatted rows.
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Table {
            file: file.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, dir: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(dir.join(&self.file))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation, `inf` for infinities.
pub fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

pub fn int<T: ToString>(v: T) -> String {
    v.to_string()
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `le`: value <= bound, `ge`: value >= bound.
    pub relation: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            relation: "le",
            pass: value <= bound,
        }
    }

    pub fn ge(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            relation: "ge",
            pass: value >= bound,
        }
    }

    pub fn holds(name: impl Into<String>, pass: bool) -> Self {
        Check {
            name: name.into(),
            value: pass as u8 as f64,
            bound: 1.0,
            relation: "ge",
            pass,
        }
    }
}

/// Everything a subcommand produces.
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    /// Extra numbers for `meta.json` (fits, diagnostics).
    pub summary: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Serialize)]
pub struct Meta<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub backend: &'a str,
    pub threads: usize,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<&'a str>,
    pub checks: &'a [Check],
    pub pass: bool,
    pub summary: &'a serde_json::Value,
}

pub fn write_all(dir: &Path, outcome: &Outcome, meta: &Meta) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for t in &outcome.tables {
        t.write(dir).map_err(std::io::Error::other)?;
    }
    // serde_json writes non-finite floats as null; checks may hold inf.
    let text = serde_json::to_string_pretty(meta).map_err(std::io::Error::other)?;
    fs::write(dir.join("meta.json"), text + "\n")
}

//! CSV output. Every file starts with one provenance comment line
//! (`# config-sha256=… seeds=…`), then a header row, then data rows. No
//! timestamps are written, so identical configs give identical files.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::files::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    /// Seeds as written to the comment line, e.g. `0;1;2` or `0..300`.
    pub seeds: String,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        let seeds: Vec<String> = config.seeds.iter().map(u64::to_string).collect();
        Self { config_hash: config.hash(), seeds: seeds.join(";") }
    }

    pub fn with_seed_range(mut self, start: u64, count: usize) -> Self {
        self.seeds = format!("{start}..{}", start + count as u64);
        self
    }

    pub fn line(&self) -> String {
        format!("# config-sha256={} seeds={}\n", self.config_hash, self.seeds)
    }
}

/// An in-memory table of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self, prov: &Provenance) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(prov.line().into_bytes());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path, prov: &Provenance) -> CliResult<()> {
        write_atomic(path, &self.render(prov))
    }
}

/// Reads a table written by [`Table::write`], skipping the comment line.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| CliError::Data(e.to_string()))?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((header, rows))
}

/// Shortest round-trip formatting, identical across runs.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

//! Tabular artifacts in CSV or JSON, and the JSON report envelope.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blowup_core::diagnostics::CheckReport;
use blowup_core::io::num;
use blowup_core::Params;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| Cell::Num(x)).collect());
    }

    /// Writes `<stem>.csv` or `<stem>.json` under `dir`; returns the path.
    pub fn write(&self, dir: &Path, stem: &str, format: Format) -> Result<PathBuf> {
        let path = dir.join(match format {
            Format::Csv => format!("{stem}.csv"),
            Format::Json => format!("{stem}.json"),
        });
        let mut out = create(&path)?;
        match format {
            Format::Csv => {
                writeln!(out, "{}", self.columns.join(","))?;
                for row in &self.rows {
                    let line: Vec<String> = row.iter().map(Cell::csv).collect();
                    writeln!(out, "{}", line.join(","))?;
                }
            }
            Format::Json => {
                let rows: Vec<Vec<Value>> = self
                    .rows
                    .iter()
                    .map(|r| r.iter().map(Cell::json).collect())
                    .collect();
                serde_json::to_writer_pretty(&mut out, &json!({ "columns": self.columns, "rows": rows }))?;
                writeln!(out)?;
            }
        }
        out.flush()?;
        Ok(path)
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Every JSON report shares this envelope; `data` is command-specific.
#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub command: &'static str,
    pub params: Option<Params>,
    pub pass: bool,
    pub checks: Vec<CheckReport>,
    pub data: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &'static str, params: Option<Params>, checks: Vec<CheckReport>, data: T) -> Self {
        Report {
            command,
            params,
            pass: checks.iter().all(|c| c.pass),
            checks,
            data,
        }
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        let mut out = create(&path)?;
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["x", "ok", "note"]);
        t.push(vec![Cell::Num(0.5), Cell::Bool(true), Cell::Text("a,b".into())]);
        let csv = std::fs::read_to_string(t.write(dir.path(), "t", Format::Csv).unwrap()).unwrap();
        assert_eq!(csv, "x,ok,note\n5.0000000000000000e-1,true,\"a,b\"\n");
        let js: Value =
            serde_json::from_str(&std::fs::read_to_string(t.write(dir.path(), "t", Format::Json).unwrap()).unwrap())
                .unwrap();
        assert_eq!(js["rows"][0][0], json!(0.5));
        assert_eq!(js["columns"][2], json!("note"));
    }
}

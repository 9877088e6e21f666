//! Tables, files and run manifests.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::args::Format;
use crate::CliError;

/// One table cell. Inputs are printed in shortest round-trip form, computed
/// values with 17 significant digits.
#[derive(Debug, Clone)]
pub enum Cell {
    Input(f64),
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Input(x) => format!("{x}"),
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Input(x) | Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(n) => Value::from(*n),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Runtime(format!("csv: {e}"));
        w.write_record(self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), v.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => json_bytes(&self.to_json()),
        }
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(format!("json: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

/// Provenance record written next to the data files.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved parameters; usable as `--config` to rerun.
    pub parameters: Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputDigest>,
}

/// Where data goes: stdout, or files in an output directory.
pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<OutputDigest>,
    started_at: String,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Sink {
            dir,
            written: Vec::new(),
            started_at: now(),
        })
    }

    pub fn to_files(&self) -> bool {
        self.dir.is_some()
    }

    /// Writes `bytes` to `name` in the output directory, or to stdout.
    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                let path = d.join(name);
                fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
                self.written.push(OutputDigest {
                    file: name.to_string(),
                    sha256: hex::encode(Sha256::digest(bytes)),
                });
            }
            None => {
                std::io::stdout()
                    .write_all(bytes)
                    .map_err(|e| CliError::Runtime(format!("stdout: {e}")))?;
            }
        }
        Ok(())
    }

    /// Writes `<command>.manifest.json` when files were produced.
    pub fn finish(self, command: &str, parameters: Value, seed: Option<u64>) -> Result<(), CliError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let manifest = RunManifest {
            command: command.to_string(),
            parameters,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at.clone(),
            finished_at: now(),
            outputs: self.written,
        };
        let path = dir.join(format!("{command}.manifest.json"));
        fs::write(&path, json_bytes(&manifest)?)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

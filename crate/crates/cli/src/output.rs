use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::{CliError, CliResult};

/// Version of the JSON envelope and CSV layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStamp {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_hash: Option<String>,
    pub library: &'static str,
    pub library_version: &'static str,
    pub cli_version: &'static str,
}

impl RunStamp {
    pub fn new(command: &str, seed: u64, config_hash: String, data_hash: Option<String>) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config_hash,
            data_hash,
            library: "randinf",
            library_version: randinf::VERSION,
            cli_version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a> {
    pub schema_version: u32,
    pub stamp: &'a RunStamp,
    pub result: &'a serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, w: W) -> CliResult<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| CliError::Runtime(format!("writing CSV: {e}"));
        wtr.write_record(&self.headers).map_err(io)?;
        for r in &self.rows {
            wtr.write_record(r).map_err(io)?;
        }
        wtr.flush().map_err(|e| CliError::Runtime(format!("writing CSV: {e}")))
    }
}

/// Shortest decimal text that reads back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub result: serde_json::Value,
    pub table: Table,
    /// Human-readable lines for standard error.
    pub notes: Vec<String>,
}

pub fn envelope_json(stamp: &RunStamp, result: &serde_json::Value) -> String {
    serde_json::to_string_pretty(&Envelope {
        schema_version: SCHEMA_VERSION,
        stamp,
        result,
    })
    .expect("envelope serializes")
}

fn write_target(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Runtime(format!("writing standard output: {e}"))),
    }
}

pub fn stamp_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".stamp.json");
    PathBuf::from(s)
}

/// JSON goes out as one stamped envelope. CSV goes out bare; its stamp is
/// written next to the file, or to standard error when writing to standard
/// output.
pub fn emit(out: &CommandOutput, stamp: &RunStamp, format: Format, path: Option<&Path>) -> CliResult<()> {
    for n in &out.notes {
        eprintln!("{n}");
    }
    match format {
        Format::Json => {
            let mut text = envelope_json(stamp, &out.result);
            text.push('\n');
            write_target(path, text.as_bytes())
        }
        Format::Csv => {
            let mut buf = Vec::new();
            out.table.write(&mut buf)?;
            write_target(path, &buf)?;
            let s = serde_json::to_string_pretty(stamp).expect("stamp serializes");
            match path {
                Some(p) => write_target(Some(&stamp_path(p)), format!("{s}\n").as_bytes()),
                None => {
                    eprintln!("{s}");
                    Ok(())
                }
            }
        }
    }
}

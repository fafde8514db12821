//! Output plumbing: versioned CSV tables, SVG plots and run manifests.

mod manifest;
pub mod svg;

pub use manifest::{digest_file, InputDigest, RunManifest, MANIFEST_FILE};

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: missing `# schema=` line")]
    MissingSchema { path: PathBuf },
    #[error("{path}: expected schema {expected}, found {found}")]
    WrongSchema { path: PathBuf, expected: String, found: String },
    #[error("{path}:{line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
}

impl ReportError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        ReportError::Io { path: path.to_path_buf(), source }
    }

    pub fn row(path: &Path, line: u64, message: impl Into<String>) -> Self {
        ReportError::Row { path: path.to_path_buf(), line, message: message.into() }
    }
}

/// A CSV table tagged with `# schema=<name>/<version>` on its first line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub name: &'static str,
    pub version: u32,
}

impl Schema {
    pub const fn new(name: &'static str, version: u32) -> Self {
        Schema { name, version }
    }

    pub fn tag(&self) -> String {
        format!("{}/{}", self.name, self.version)
    }
}

/// Floats are written with Rust's shortest round-trip formatting.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64, String> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.trim().parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}")),
    }
}

pub fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_table<S, R>(path: &Path, schema: Schema, header: &[&str], rows: R) -> Result<(), ReportError>
where
    R: IntoIterator<Item = Vec<S>>,
    S: AsRef<str>,
{
    let file = File::create(path).map_err(|e| ReportError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e: io::Error| ReportError::io(path, e);
    writeln!(out, "# schema={}", schema.tag()).map_err(io_err)?;
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        let csv_err = |e: csv::Error| ReportError::io(path, io::Error::other(e));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row.iter().map(|s| s.as_ref())).map_err(csv_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// A parsed table: column names plus rows with their 1-based file line.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub schema: Schema,
    pub header: Vec<String>,
    pub rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize, ReportError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ReportError::row(&self.path, 2, format!("missing column {name:?}")))
    }
}

/// Reads a table whose schema line names one of `accepted`.
pub fn read_table(path: &Path, accepted: &[Schema]) -> Result<Table, ReportError> {
    let file = File::open(path).map_err(|e| ReportError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| ReportError::io(path, e))?;
    let tag = first
        .trim_end()
        .strip_prefix("# schema=")
        .ok_or_else(|| ReportError::MissingSchema { path: path.to_path_buf() })?
        .to_string();
    let expected = || accepted.iter().map(Schema::tag).collect::<Vec<_>>().join(" or ");
    let schema = *accepted.iter().find(|s| s.tag() == tag).ok_or_else(|| ReportError::WrongSchema {
        path: path.to_path_buf(),
        expected: expected(),
        found: tag.clone(),
    })?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> =
        csv.headers().map_err(|e| ReportError::row(path, 2, e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in csv.records() {
        // the schema line precedes what the csv reader counts
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() + 1);
            ReportError::row(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() + 1);
        rows.push((line, rec));
    }
    Ok(Table { path: path.to_path_buf(), schema, header, rows })
}

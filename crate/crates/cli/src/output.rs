//! Run manifests and report output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use ksh_core::io::{format_f64, to_json_string};
use serde::Serialize;
use serde_json::Value;

use crate::cli::Format;

/// Everything needed to reproduce an output: rerunning with the same manifest
/// gives the same bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub input_hashes: BTreeMap<String, String>,
    pub tool_version: String,
    pub seed: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: impl Serialize, input_hashes: &BTreeMap<String, String>, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            input_hashes: input_hashes.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    manifest: &'a RunManifest,
    report: &'a T,
}

/// A table for plotting: one row per record, all cells numeric or text.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
}

impl Table {
    fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Num(x) => format_f64(*x),
                Cell::Int(k) => k.to_string(),
                Cell::Text(s) => s.clone(),
            }))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// Writes `{manifest, report}` to `out`, or to stdout when `out` is absent.
/// With `--out`, the manifest alone goes to stdout. CSV output carries the
/// table only; its manifest goes to stdout.
pub fn emit<T: Serialize>(
    manifest: &RunManifest,
    report: &T,
    table: Option<&Table>,
    format: Format,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let text = match format {
        Format::Json => to_json_string(&Envelope { manifest, report })? + "\n",
        Format::Csv => match table {
            Some(t) => t.to_csv()?,
            None => bail!("{} has no tabular output; use --format json", manifest.command),
        },
    };
    match out {
        Some(path) => {
            write_file(path, &text)?;
            println!("{}", to_json_string(manifest)?);
        }
        None => {
            if format == Format::Csv {
                eprintln!("{}", to_json_string(manifest)?);
            }
            print!("{text}");
        }
    }
    Ok(())
}

pub fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_file(path, &(to_json_string(value)? + "\n"))
}

//! Output files. Every CSV starts with a version comment line so downstream
//! tools can detect column changes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::error::CliError;

pub const FORMAT_TAG: &str = "ddnn-perflab v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Parse(format!("cannot encode row: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Parse(format!("cannot encode rows: {}", e.error())))?;
    Ok(format!("# {FORMAT_TAG}\n{}", String::from_utf8_lossy(&bytes)))
}

#[derive(Serialize)]
struct JsonTable<'a, T> {
    format: &'static str,
    scenario: &'a str,
    rows: &'a [T],
}

pub fn json_string<T: Serialize>(scenario: &str, rows: &[T]) -> Result<String, CliError> {
    let table = JsonTable {
        format: FORMAT_TAG,
        scenario,
        rows,
    };
    let mut text = serde_json::to_string_pretty(&table)
        .map_err(|e| CliError::Parse(format!("cannot encode rows: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Writes `rows` to `<dir>/<stem>.<ext>` in the chosen format.
pub fn write_table<T: Serialize>(
    dir: &Path,
    stem: &str,
    scenario: &str,
    rows: &[T],
    format: Format,
) -> Result<PathBuf, CliError> {
    let text = match format {
        Format::Csv => csv_string(rows)?,
        Format::Json => json_string(scenario, rows)?,
    };
    let path = dir.join(format!("{stem}.{}", format.extension()));
    write_file(&path, &text)?;
    Ok(path)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

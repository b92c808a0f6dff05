//! Versioned CSV and JSON output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// First line of every CSV file written by this crate.
pub const CSV_VERSION_LINE: &str = "# lookahead-ehpc v1";

/// Serializes `rows` as CSV preceded by the version line.
pub fn write_csv<W: Write, T: Serialize>(mut out: W, rows: &[T]) -> Result<()> {
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut csv = csv::Writer::from_writer(out);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Parses a CSV file written by [`write_csv`], checking the version line.
pub fn read_csv<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != CSV_VERSION_LINE {
        return Err(Error::Config(format!(
            "unsupported CSV header line {:?}",
            first.trim_end()
        )));
    }
    let mut csv = csv::Reader::from_reader(reader);
    csv.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    create_parent(path)?;
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(&mut out, rows)?;
    out.flush()?;
    Ok(())
}

pub fn read_csv_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_csv(File::open(path)?)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

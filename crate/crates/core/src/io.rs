//! CSV and JSON persistence for datasets, models and proxy sets.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::util::fmt_float;

/// Default name of the label column.
pub const DEFAULT_TARGET: &str = "target";

/// Reads a headed CSV; `target` names the label column, every other column is
/// a feature. Returns `None` for a file with a header but no rows.
pub fn read_dataset<R: Read>(reader: R, target: &str, task: Task) -> Result<Option<Dataset>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let target_col = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::InvalidInput(format!("no column named '{target}'")))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(names.len());
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidInput(format!("row {}: '{field}' is not a number", line + 1))
            })?;
            if i == target_col {
                y.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(None);
    }
    Dataset::with_names(Matrix::from_rows(&rows)?, y, task, names).map(Some)
}

pub fn read_dataset_file(path: &Path, target: &str, task: Task) -> Result<Option<Dataset>> {
    read_dataset(BufReader::new(File::open(path)?), target, task)
}

pub fn write_dataset<W: Write>(writer: W, data: &Dataset, target: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push(target);
    w.write_record(&header)?;
    for (row, y) in data.x().iter_rows().zip(data.y()) {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        rec.push(fmt_float(*y));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(path: &Path, data: &Dataset, target: &str) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data, target)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

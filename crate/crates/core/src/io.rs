//! CSV and JSON files read and written by the command-line tool.
//!
//! Floats in CSV files are written with 17 significant digits so that values
//! survive a write/read cycle unchanged.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coupling::CMatrix;
use crate::observables::{G2Grid, ObservableSeries};
use crate::params::SimulationConfig;
use crate::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn series_csv(series: &ObservableSeries) -> String {
    let mut out = String::from("t,i_plus,i_minus,sz\n");
    for k in 0..series.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(series.time_grid[k]),
            fmt_f64(series.mean_i_plus[k]),
            fmt_f64(series.mean_i_minus[k]),
            fmt_f64(series.sz_mean[k]),
        );
    }
    out
}

/// Mean curves read back from a series file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub t: Vec<f64>,
    pub i_plus: Vec<f64>,
    pub i_minus: Vec<f64>,
    pub sz: Vec<f64>,
}

/// Parses a CSV file with a header row into numeric columns, checking the
/// header against `expected`.
pub fn parse_csv(text: &str, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(&e))?.clone();
    if header.is_empty() {
        return Err(Error::InsufficientData("empty CSV file".into()));
    }
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Validation {
            message: format!("expected CSV header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
            line: Some(1),
        });
    }
    let mut cols = vec![Vec::new(); expected.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map(|p| p.line() as usize);
        if record.len() != expected.len() {
            return Err(Error::Validation { message: format!("expected {} columns, found {}", expected.len(), record.len()), line });
        }
        for (c, f) in record.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Validation { message: format!("`{f}` is not a number"), line })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

fn csv_error(e: &csv::Error) -> Error {
    Error::Validation { message: e.to_string(), line: e.position().map(|p| p.line() as usize) }
}

pub fn read_series_csv(path: impl AsRef<Path>) -> Result<SeriesTable> {
    let mut cols = parse_csv(&fs::read_to_string(path)?, &["t", "i_plus", "i_minus", "sz"])?;
    let sz = cols.pop().unwrap_or_default();
    let i_minus = cols.pop().unwrap_or_default();
    let i_plus = cols.pop().unwrap_or_default();
    let t = cols.pop().unwrap_or_default();
    Ok(SeriesTable { t, i_plus, i_minus, sz })
}

/// Two-column `(x, y)` points, e.g. cooperation number and peak rate.
pub fn read_points_csv(path: impl AsRef<Path>, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let cols = parse_csv(&fs::read_to_string(path)?, &[x, y])?;
    Ok(cols[0].iter().cloned().zip(cols[1].iter().cloned()).collect())
}

/// `t1,t2,g2` rows; masked points are skipped.
pub fn g2_csv(grid: &G2Grid) -> String {
    let t = grid.time_grid.len();
    let mut out = String::from("t1,t2,g2\n");
    for a in 0..t {
        for b in 0..t {
            if let Some(v) = grid.get(a, b) {
                let _ = writeln!(out, "{},{},{}", fmt_f64(grid.time_grid[a]), fmt_f64(grid.time_grid[b]), fmt_f64(v));
            }
        }
    }
    out
}

/// Row-major `re,im` dump of a complex matrix, one matrix row per line.
pub fn matrix_csv(m: &CMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{} {}", fmt_f64(m[(r, c)].re), fmt_f64(m[(r, c)].im))).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// A configuration file, or a run summary that embeds one under `config`.
#[derive(Deserialize)]
struct Embedded {
    config: serde_json::Value,
}

/// Reads a configuration, accepting run summaries as well so that any run can
/// be repeated from its summary.
pub fn read_config(path: impl AsRef<Path>) -> Result<SimulationConfig> {
    let text = fs::read_to_string(path)?;
    if let Ok(Embedded { config }) = serde_json::from_str::<Embedded>(&text) {
        let inner = serde_json::to_string_pretty(&config)?;
        return SimulationConfig::from_json_str(&inner);
    }
    SimulationConfig::from_json_str(&text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { message: e.to_string(), line: e.line(), column: e.column() })
}

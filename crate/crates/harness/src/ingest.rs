//! Readers and writers for the on-disk data formats: count series, count
//! matrices, and lattice rasters. All three are comma-separated UTF-8 with
//! a header row; parse errors name the line and column.

use std::path::Path;

use lrm_core::domain::StatePoint;

use crate::report::csv_string;
use crate::{HarnessError, Result};

fn parse_int(raw: &str, line: usize, col: usize) -> Result<i64> {
    let trimmed = raw.trim();
    trimmed.parse::<i64>().map_err(|_| {
        HarnessError::Config(format!(
            "line {line}, column {col}: {trimmed:?} is not an integer"
        ))
    })
}

/// Split CSV text into header fields and data rows of fields. Accepts LF
/// or CRLF line endings and ignores trailing blank lines. Fields here are
/// plain (no quoting) — these files only carry integers.
fn rows_of(text: &str, path: &Path) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(HarnessError::Config(format!(
            "{} is empty",
            path.display()
        )));
    };
    let header: Vec<String> = header.split(',').map(|f| f.trim().to_string()).collect();
    let mut out = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<String> = line.split(',').map(|f| f.to_string()).collect();
        if fields.len() != header.len() {
            return Err(HarnessError::Config(format!(
                "{}: line {lineno} has {} fields, header has {}",
                path.display(),
                fields.len(),
                header.len()
            )));
        }
        out.push((lineno, fields));
    }
    if out.is_empty() {
        return Err(HarnessError::Config(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }
    Ok((header, out))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path.display().to_string(), e))
}

/// One column of non-negative counts.
pub fn read_count_series(path: &Path) -> Result<Vec<i64>> {
    let text = read_text(path)?;
    let (header, rows) = rows_of(&text, path)?;
    if header.len() != 1 {
        return Err(HarnessError::Config(format!(
            "{}: expected a single count column, found {} columns",
            path.display(),
            header.len()
        )));
    }
    let mut out = Vec::with_capacity(rows.len());
    for (lineno, fields) in rows {
        let v = parse_int(&fields[0], lineno, 1)?;
        if v < 0 {
            return Err(HarnessError::Config(format!(
                "line {lineno}: counts must be non-negative, got {v}"
            )));
        }
        out.push(v);
    }
    Ok(out)
}

/// A matrix of non-negative counts, one observation per row. The header's
/// width fixes the dimension.
pub fn read_count_matrix(path: &Path) -> Result<Vec<StatePoint>> {
    let text = read_text(path)?;
    let (header, rows) = rows_of(&text, path)?;
    let d = header.len();
    let mut out = Vec::with_capacity(rows.len());
    for (lineno, fields) in rows {
        let mut coords = Vec::with_capacity(d);
        for (j, f) in fields.iter().enumerate() {
            let v = parse_int(f, lineno, j + 1)?;
            if v < 0 {
                return Err(HarnessError::Config(format!(
                    "line {lineno}, column {}: counts must be non-negative, got {v}",
                    j + 1
                )));
            }
            coords.push(v);
        }
        out.push(StatePoint::new(coords));
    }
    Ok(out)
}

/// A rectangular raster of integer labels, one grid row per CSV row. The
/// caller checks the values against its state set.
pub fn read_raster(path: &Path) -> Result<Vec<Vec<i64>>> {
    let text = read_text(path)?;
    let (header, rows) = rows_of(&text, path)?;
    let cols = header.len();
    let mut out = Vec::with_capacity(rows.len());
    for (lineno, fields) in rows {
        let mut row = Vec::with_capacity(cols);
        for (j, f) in fields.iter().enumerate() {
            row.push(parse_int(f, lineno, j + 1)?);
        }
        out.push(row);
    }
    Ok(out)
}

pub fn series_to_csv(series: &[i64]) -> String {
    csv_string(
        &["count"],
        series.iter().map(|v| vec![v.to_string()]),
    )
}

pub fn matrix_to_csv(points: &[StatePoint]) -> String {
    let d = points.first().map_or(0, |p| p.dim());
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    csv_string(
        &header.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        points
            .iter()
            .map(|p| p.coords().iter().map(|v| v.to_string()).collect()),
    )
}

pub fn raster_to_csv(rows: &[Vec<i64>]) -> String {
    let cols = rows.first().map_or(0, |r| r.len());
    let header: Vec<String> = (1..=cols).map(|j| format!("c{j}")).collect();
    csv_string(
        &header.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        rows.iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect()),
    )
}

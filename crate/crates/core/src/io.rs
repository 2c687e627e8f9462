//! CSV matrix files with an optional provenance comment line.
//!
//! Numbers are written as `{:.16e}` (17 significant digits) so that a write
//! followed by a read reproduces every `f64` bit for bit. Lines starting with
//! `#` are comments.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies the config and seed that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header row and data rows as CSV.
pub fn write_csv<P: AsRef<Path>>(
    path: P,
    provenance: Option<&Provenance>,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    if let Some(p) = provenance {
        writeln!(out, "{}", p.comment())?;
    }
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(header).map_err(csv_io)?;
    for row in rows {
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes `m` one matrix row per CSV row, header `c0..c{cols-1}`.
pub fn write_matrix_rows<P: AsRef<Path>>(path: P, m: &DMatrix<f64>, provenance: Option<&Provenance>) -> Result<()> {
    let header: Vec<String> = (0..m.ncols()).map(|c| format!("c{c}")).collect();
    let rows = m.row_iter().map(|r| r.iter().map(|&v| format_f64(v)).collect());
    write_csv(path, provenance, &header, rows)
}

/// Parsed numeric CSV: header plus rows, each row the same length as the header.
pub struct NumericCsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_numeric_csv<P: AsRef<Path>>(path: P) -> Result<NumericCsv> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, None, e.to_string()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, None, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, None, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::parse(
                path,
                line,
                None,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (name, field) in header.iter().zip(rec.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, Some(name), format!("not a number: {field:?}")))?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(NumericCsv { header, rows })
}

/// Reads a matrix written by [`write_matrix_rows`].
pub fn read_matrix_rows<P: AsRef<Path>>(path: P) -> Result<DMatrix<f64>> {
    let csv = read_numeric_csv(path)?;
    let cols = csv.header.len();
    Ok(DMatrix::from_fn(csv.rows.len(), cols, |i, j| csv.rows[i][j]))
}

pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn read_json<P: AsRef<Path>, T: for<'de> Deserialize<'de>>(path: P) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, None, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips_bits() {
        for v in [0.1, -0.0, 1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, -2.5e-17] {
            let back: f64 = format_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v}");
        }
    }

    #[test]
    fn bad_number_reports_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "# c\nc0,c1\n1.0,2.0\n3.0,abc\n").unwrap();
        match read_matrix_rows(&path) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(field.as_deref(), Some("c1"));
            }
            other => panic!("expected parse error, got {:?}", other.map(|m| m.shape())),
        }
    }
}

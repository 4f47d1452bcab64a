//! CSV ingestion and export.
//!
//! Source files carry `x1..xd,w,y` and target files `x1..xd`, in any column
//! order. Floats are written in shortest round-trip form so that an
//! export/ingest cycle is exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use transport_bounds::{SourceDataset, SourceUnit, TargetDataset, TargetUnit};

use crate::CliError;

struct Table {
    label: String,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, CliError> {
        let label = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::Data(format!("{label}: {e}")))?;
        let header = rdr
            .headers()
            .map_err(|e| CliError::Data(format!("{label}: {e}")))?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{label}: {e}")))?;
        Ok(Self { label, header, rows })
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect()
    }

    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.index()
            .get(name)
            .copied()
            .ok_or_else(|| CliError::Data(format!("{}: missing column `{name}`", self.label)))
    }

    /// Positions of x1..xd, where d is the number of `x<k>` headers.
    fn covariate_columns(&self) -> Result<Vec<usize>, CliError> {
        let d = self
            .header
            .iter()
            .filter(|h| h.strip_prefix('x').is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit())))
            .count();
        (1..=d).map(|k| self.column(&format!("x{k}"))).collect()
    }

    fn number(&self, row: usize, col: usize) -> Result<f64, CliError> {
        let cell = self.rows[row].get(col).unwrap_or("");
        cell.parse::<f64>().map_err(|_| {
            CliError::Data(format!(
                "{}: row {}, column `{}`: `{cell}` is not a number",
                self.label,
                row + 1,
                self.header[col]
            ))
        })
    }

    fn covariates(&self, row: usize, cols: &[usize]) -> Result<Vec<f64>, CliError> {
        cols.iter().map(|&c| self.number(row, c)).collect()
    }
}

pub fn read_source(path: &Path, propensity: f64) -> Result<SourceDataset, CliError> {
    let t = Table::read(path)?;
    let xs = t.covariate_columns()?;
    let w = t.column("w")?;
    let y = t.column("y")?;
    let mut units = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let treated = match t.rows[r].get(w).unwrap_or("") {
            "1" | "1.0" => true,
            "0" | "0.0" => false,
            other => {
                return Err(CliError::Data(format!(
                    "{}: row {}, column `w`: expected 0 or 1, found `{other}`",
                    t.label,
                    r + 1
                )))
            }
        };
        units.push(SourceUnit::new(t.covariates(r, &xs)?, treated, t.number(r, y)?));
    }
    SourceDataset::new(units, propensity).map_err(|e| CliError::Data(format!("{}: {e}", t.label)))
}

pub fn read_target(path: &Path) -> Result<TargetDataset, CliError> {
    let t = Table::read(path)?;
    let xs = t.covariate_columns()?;
    if xs.is_empty() {
        return Err(CliError::Data(format!("{}: missing column `x1`", t.label)));
    }
    let units = (0..t.rows.len())
        .map(|r| t.covariates(r, &xs).map(TargetUnit::new))
        .collect::<Result<Vec<_>, _>>()?;
    TargetDataset::new(units).map_err(|e| CliError::Data(format!("{}: {e}", t.label)))
}

/// Shortest string that parses back to `v`, in exponent form outside
/// [1e-5, 1e16).
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn covariate_header(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("x{k}")).collect()
}

pub fn write_rows<P: AsRef<Path>>(path: P, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_source(path: &Path, data: &SourceDataset) -> Result<(), CliError> {
    let mut header = covariate_header(data.dim());
    header.extend(["w".to_owned(), "y".to_owned()]);
    let rows: Vec<Vec<String>> = data
        .units()
        .iter()
        .map(|u| {
            let mut r: Vec<String> = u.x.iter().map(|&v| fmt_f64(v)).collect();
            r.push(if u.treated { "1" } else { "0" }.to_owned());
            r.push(fmt_f64(u.y));
            r
        })
        .collect();
    write_rows(path, &header, &rows)
}

pub fn write_target(path: &Path, data: &TargetDataset) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = data
        .units()
        .iter()
        .map(|u| u.x.iter().map(|&v| fmt_f64(v)).collect())
        .collect();
    write_rows(path, &covariate_header(data.dim()), &rows)
}

pub fn write_json<P: AsRef<Path>, T: serde::Serialize>(path: P, value: &T) -> Result<(), CliError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()).and_then(|_| f.write_all(b"\n")))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

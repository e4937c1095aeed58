use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::experiment::RunData;
use crate::error::{OboError, Result};

/// First line of every run CSV.
pub const CSV_SCHEMA_LINE: &str = "# obo-runlog schema v1";

pub const CSV_COLUMNS: [&str; 11] = [
    "t",
    "blr_instant",
    "blr_cumulative",
    "blr_static_cumulative",
    "hg_error",
    "inner_err",
    "h2_increment",
    "v1_increment",
    "x_norm",
    "y_norm",
    "wallclock_ns",
];

/// Files written for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactSet {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

fn csv_error(e: csv::Error) -> OboError {
    OboError::Io(e.to_string())
}

/// Shortest round-trip text; exponent form only for very small or large magnitudes.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn cell(series: Option<&[f64]>, i: usize) -> String {
    series.map(|s| format_real(s[i])).unwrap_or_default()
}

pub fn write_csv(data: &RunData, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{CSV_SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    let s = &data.series;
    let vars = s.variations.as_ref();
    for (i, row) in data.log.rows().iter().enumerate() {
        w.write_record([
            row.t.to_string(),
            cell(s.blr_instant.as_deref(), i),
            cell(s.blr_cumulative.as_deref(), i),
            cell(s.blr_static_cumulative.as_deref(), i),
            cell(s.hg_error.as_deref(), i),
            format_real(s.inner_err[i]),
            cell(vars.map(|v| v.h2_increments.as_slice()), i),
            cell(vars.map(|v| v.v1_increments.as_slice()), i),
            format_real(s.x_norm[i]),
            format_real(s.y_norm[i]),
            s.wallclock_ns.as_ref().map(|w| w[i].to_string()).unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| OboError::Io(e.to_string()))?;
    writeln!(file)?;
    file.flush()?;
    Ok(())
}

/// Writes `<run_id>.csv` and `<run_id>.summary.json` into `dir`.
pub fn write_artifacts(data: &RunData, dir: &Path) -> Result<ArtifactSet> {
    fs::create_dir_all(dir)?;
    let id = &data.summary.run_id;
    let set = ArtifactSet {
        csv: dir.join(format!("{id}.csv")),
        summary: dir.join(format!("{id}.summary.json")),
    };
    write_csv(data, &set.csv)?;
    write_json(&data.summary, &set.summary)?;
    Ok(set)
}

/// Parsed run CSV: the header and one row of optional numbers per round.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Reads a run CSV, checking the schema line and column order.
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    let body = text
        .strip_prefix(CSV_SCHEMA_LINE)
        .and_then(|rest| rest.strip_prefix('\n'))
        .ok_or_else(|| OboError::Io(format!("{}: missing schema line", path.display())))?;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let columns: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if columns != CSV_COLUMNS {
        return Err(OboError::Io(format!("{}: unexpected columns {columns:?}", path.display())));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row = record
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|e| OboError::Io(format!("bad number {f:?}: {e}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(CsvTable { columns, rows })
}

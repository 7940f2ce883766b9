//! Trial data CSV files: `id,arm,y1,y2,<covariates...>`.
//!
//! Arms must be 0 or 1. Outcomes are 0, 1 or missing, covariates numeric or
//! missing; `NA` and empty fields are missing. Rows with anything missing are
//! dropped.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::TrialDataset;

const FIXED_COLUMNS: [&str; 4] = ["id", "arm", "y1", "y2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub n_rows: usize,
    pub n_dropped: usize,
    pub n_analyzed: usize,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "NA"
}

fn schema_error(line: usize, column: &str, msg: String) -> Error {
    Error::InvalidDataset(format!("line {line}, column '{column}': {msg}"))
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(format!("{source}: {e}")),
        _ => Error::InvalidDataset(format!("{source}: {e}")),
    }
}

/// Parses trial data, dropping incomplete rows.
pub fn parse_trial_csv<R: Read>(reader: R, source: &str) -> Result<(TrialDataset, IngestSummary)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(source, e))?
        .iter()
        .map(str::to_string)
        .collect();
    for (pos, want) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(pos).map(String::as_str) != Some(*want) {
            return Err(Error::InvalidDataset(format!(
                "{source}: column {} of the header must be '{want}', found '{}'",
                pos + 1,
                header.get(pos).map_or("", String::as_str)
            )));
        }
    }
    let names: Vec<String> = header[FIXED_COLUMNS.len()..].to_vec();
    if names.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "{source}: no covariate columns"
        )));
    }
    if let Some(dup) = names
        .iter()
        .enumerate()
        .find(|(i, n)| names[..*i].contains(n))
    {
        return Err(Error::InvalidDataset(format!(
            "{source}: duplicate column '{}'",
            dup.1
        )));
    }

    let mut ids = Vec::new();
    let mut arm = Vec::new();
    let mut y1 = Vec::new();
    let mut y2 = Vec::new();
    let mut covariates: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut n_rows = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = row + 2;
        n_rows += 1;
        let id = &record[0];
        if id.is_empty() {
            return Err(schema_error(line, "id", "empty id".into()));
        }
        let a = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(schema_error(
                    line,
                    "arm",
                    format!("expected 0 or 1, got '{other}'"),
                ))
            }
        };
        let mut outcomes = [None; 2];
        for (o, slot) in outcomes.iter_mut().enumerate() {
            *slot = match &record[2 + o] {
                "0" => Some(0),
                "1" => Some(1),
                f if is_missing(f) => None,
                other => {
                    return Err(schema_error(
                        line,
                        FIXED_COLUMNS[2 + o],
                        format!("expected 0, 1 or NA, got '{other}'"),
                    ))
                }
            };
        }
        let mut x = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            let f = &record[FIXED_COLUMNS.len() + j];
            if is_missing(f) {
                x.push(None);
                continue;
            }
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => x.push(Some(v)),
                _ => {
                    return Err(schema_error(
                        line,
                        name,
                        format!("expected a finite number or NA, got '{f}'"),
                    ))
                }
            }
        }
        let (Some(o1), Some(o2)) = (outcomes[0], outcomes[1]) else {
            continue;
        };
        if x.iter().any(Option::is_none) {
            continue;
        }
        ids.push(id.to_string());
        arm.push(a);
        y1.push(o1);
        y2.push(o2);
        for (col, v) in covariates.iter_mut().zip(x) {
            col.push(v.expect("checked above"));
        }
    }
    if let Some(dup) = first_duplicate(&ids) {
        return Err(Error::InvalidDataset(format!(
            "{source}: duplicate id '{dup}'"
        )));
    }
    let n_analyzed = ids.len();
    let dataset = TrialDataset::with_labels(ids, arm, y1, y2, covariates, names)
        .map_err(|e| Error::InvalidDataset(format!("{source}: {e}")))?;
    Ok((
        dataset,
        IngestSummary {
            n_rows,
            n_dropped: n_rows - n_analyzed,
            n_analyzed,
        },
    ))
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut sorted: Vec<&str> = ids.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    sorted.windows(2).find(|w| w[0] == w[1]).map(|w| w[0])
}

pub fn read_trial_csv(path: &Path) -> Result<(TrialDataset, IngestSummary)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trial_csv(std::io::BufReader::new(file), &path.display().to_string())
}

/// Writes a dataset in the ingest format. Values round-trip exactly.
pub fn write_trial_csv<W: Write>(dataset: &TrialDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    let header = FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(dataset.covariate_names.iter().cloned());
    w.write_record(header).map_err(io)?;
    for i in 0..dataset.n() {
        let mut rec = vec![
            dataset.ids[i].clone(),
            dataset.arm[i].to_string(),
            dataset.y1[i].to_string(),
            dataset.y2[i].to_string(),
        ];
        rec.extend(dataset.covariates.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

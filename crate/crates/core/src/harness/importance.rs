//! Importance matrices as CSV: a header of metric names, then one row of
//! weights in `[0, 1]` per activity.

use std::io::Read;
use std::path::Path;

use crate::domain::ImportanceMatrix;
use crate::error::{Error, Result};

/// Matrix plus the metric names from the header.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    pub metric_names: Vec<String>,
    pub matrix: ImportanceMatrix<f64>,
}

pub fn load_importance(path: &Path) -> Result<ImportanceTable> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    parse_importance(file).map_err(|e| e.context(format!("reading {}", path.display())))
}

pub fn parse_importance<R: Read>(reader: R) -> Result<ImportanceTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let metric_names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if metric_names.is_empty() || metric_names.iter().any(String::is_empty) {
        return Err(Error::invalid("importance header must name every metric"));
    }
    let mut rows = Vec::new();
    for (g, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != metric_names.len() {
            return Err(Error::invalid(format!(
                "importance row {g} has {} fields, header has {}",
                record.len(),
                metric_names.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(m, field)| {
                let v: f64 = field.parse().map_err(|_| {
                    Error::invalid(format!(
                        "importance row {g}, column `{}`: `{field}` is not a number",
                        metric_names[m]
                    ))
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!(
                        "importance row {g}, column `{}`: {v} is outside [0, 1]",
                        metric_names[m]
                    )));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(ImportanceTable {
        metric_names,
        matrix: ImportanceMatrix::new(rows)?,
    })
}

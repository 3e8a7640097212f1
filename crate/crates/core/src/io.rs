//! Comma-separated dataset files with a mandatory header row.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::Dataset;
use crate::scalar::Scalar;

/// Reads a dataset whose column `response` is the outcome; every other
/// column becomes a covariate, in file order.
pub fn read_dataset<T: Scalar, R: Read>(reader: R, response: &str) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let target = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::InvalidDataset(format!("response column '{response}' not found")))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, h)| h.to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::InvalidDataset("no covariate columns".into()));
    }
    let mut y = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(names.len());
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidDataset(format!(
                    "row {}, column '{}': '{field}' is not a number",
                    line + 2,
                    &headers[i]
                ))
            })?;
            if i == target {
                y.push(T::of(v));
            } else {
                row.push(T::of(v));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    Dataset::new(y, Matrix::from_rows(&rows)?, names)
}

/// Writes the response first, then the covariates.
pub fn write_dataset<T: Scalar, W: Write>(dataset: &Dataset<T>, response: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![response.to_string()];
    header.extend(dataset.names().iter().cloned());
    w.write_record(&header)?;
    for i in 0..dataset.n() {
        let mut rec = vec![dataset.y()[i].to_string()];
        rec.extend(dataset.x().row(i).iter().map(T::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

//! Feature matrices as CSV: a header row of feature names, one row per
//! frame, and an optional integer `label` column.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Shortest-digit formatting is not enough for the file contract; every real
/// is written with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub values: Array2<f64>,
    pub labels: Option<Vec<usize>>,
}

pub fn write_features<W: Write>(out: W, table: &FeatureTable) -> Result<()> {
    let (rows, cols) = table.values.dim();
    if table.names.len() != cols {
        return Err(Error::input(format!(
            "{} feature names for {cols} columns",
            table.names.len()
        )));
    }
    if let Some(l) = &table.labels {
        if l.len() != rows {
            return Err(Error::input(format!("{} labels for {rows} rows", l.len())));
        }
    }
    let mut w = ::csv::Writer::from_writer(out);
    let mut header: Vec<&str> = table.names.iter().map(String::as_str).collect();
    if table.labels.is_some() {
        header.push("label");
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in table.values.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
        if let Some(l) = &table.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(input: R) -> Result<FeatureTable> {
    let mut r = ::csv::ReaderBuilder::new().trim(::csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let label_col = header.iter().position(|h| h == "label");
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (i, field) in rec.iter().enumerate() {
            if Some(i) == label_col {
                let l: usize = field.parse().map_err(|_| {
                    Error::Malformed(format!("row {}: label `{field}` is not a non-negative integer", line + 1))
                })?;
                labels.push(l);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Malformed(format!("row {}: `{field}` is not a number", line + 1))
                })?;
                if !v.is_finite() {
                    return Err(Error::input(format!("row {}: non-finite feature", line + 1)));
                }
                data.push(v);
            }
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, names.len()), data)
        .map_err(|e| Error::Malformed(format!("ragged feature table: {e}")))?;
    Ok(FeatureTable {
        names,
        values,
        labels: label_col.map(|_| labels),
    })
}

pub(crate) fn csv_err(e: ::csv::Error) -> Error {
    Error::Malformed(e.to_string())
}

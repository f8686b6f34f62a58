//! CSV datasets: one example per row, numeric feature columns and one
//! integer label column.

use std::path::Path;

use weightscape_core::{Dataset, Matrix};

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    /// 0-based column position.
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// All-digit strings are positions, anything else a header name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label: LabelColumn::Name("label".into()),
            has_header: true,
        }
    }
}

fn parse_label(cell: &str) -> Option<usize> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<usize>() {
        return Some(v);
    }
    // tolerate "1.0" style labels written by numeric tools
    let v: f64 = cell.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64).then_some(v as usize)
}

/// Parses CSV text; `path` is only used in error messages.
pub fn parse_csv(text: &[u8], path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .from_reader(text);
    let csv_err = |e: csv::Error| {
        let row = e.position().map_or(0, |p| p.line());
        Error::Csv {
            path: path.to_path_buf(),
            row,
            column: 0,
            message: e.to_string(),
        }
    };
    let headers: Option<Vec<String>> = if opts.has_header {
        Some(
            reader
                .headers()
                .map_err(csv_err)?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = headers.as_ref().map(Vec::len);
    let mut label_at: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let cols = *width.get_or_insert(record.len());
        if record.len() != cols {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                row: line,
                column: record.len().min(cols) + 1,
                message: format!("expected {cols} fields, found {}", record.len()),
            });
        }
        let label_col = match label_at {
            Some(c) => c,
            None => {
                let c = match (&opts.label, &headers) {
                    (LabelColumn::Index(i), _) => *i,
                    (LabelColumn::Name(name), Some(h)) => h
                        .iter()
                        .position(|x| x == name)
                        .ok_or_else(|| Error::Format {
                            path: path.to_path_buf(),
                            message: format!(
                                "no label column named '{name}' (columns: {})",
                                h.join(",")
                            ),
                        })?,
                    (LabelColumn::Name(name), None) => {
                        return Err(Error::Usage(format!(
                            "label column '{name}' given by name but the file has no header"
                        )))
                    }
                };
                if c >= cols {
                    return Err(Error::Format {
                        path: path.to_path_buf(),
                        message: format!("label column {c} out of range for {cols} columns"),
                    });
                }
                label_at = Some(c);
                c
            }
        };
        for (j, cell) in record.iter().enumerate() {
            if j == label_col {
                let l = parse_label(cell).ok_or_else(|| Error::Csv {
                    path: path.to_path_buf(),
                    row: line,
                    column: j + 1,
                    message: format!("label '{cell}' is not a non-negative integer"),
                })?;
                labels.push(l);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Csv {
                    path: path.to_path_buf(),
                    row: line,
                    column: j + 1,
                    message: format!("'{cell}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv {
                        path: path.to_path_buf(),
                        row: line,
                        column: j + 1,
                        message: format!("'{cell}' is not finite"),
                    });
                }
                features.push(v);
            }
        }
    }
    let Some(label_col) = label_at else {
        return Err(Error::Core(weightscape_core::Error::EmptyDataset));
    };
    let d = width.unwrap_or(0) - 1;
    let matrix = Matrix::from_vec(labels.len(), d, features)?;
    let mut ds = Dataset::new(matrix, labels)?;
    if let Some(h) = headers {
        let names = h
            .into_iter()
            .enumerate()
            .filter(|(j, _)| *j != label_col)
            .map(|(_, n)| n)
            .collect();
        ds = ds.with_feature_names(names)?;
    }
    Ok(ds)
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    parse_csv(&fsutil::read(path)?, path, opts)
}

/// Header of feature names (or `x1..xd`) plus `label`; floats in shortest
/// round-trip form.
pub fn to_csv(ds: &Dataset) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = match ds.feature_names() {
        Some(n) => n.to_vec(),
        None => (1..=ds.dim()).map(|j| format!("x{j}")).collect(),
    };
    header.push("label".into());
    w.write_record(&header).expect("writing to memory");
    let mut row = Vec::with_capacity(ds.dim() + 1);
    for (i, &label) in ds.labels().iter().enumerate() {
        row.clear();
        row.extend(ds.features().row(i).iter().map(|v| v.to_string()));
        row.push(label.to_string());
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("in-memory writer")
}

pub fn save_csv(path: &Path, ds: &Dataset) -> Result<()> {
    fsutil::write_atomic(path, &to_csv(ds))
}

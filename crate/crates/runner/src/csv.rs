//! Headerless numeric CSV: `d` feature columns, optionally followed by an
//! integer label column.

use std::io::Write;
use std::path::Path;

use udp_core::{Dataset, Matrix};

use crate::error::{io_err, Error, Result};

pub fn load_csv(path: &Path, has_labels: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_csv(file, path, has_labels)
}

pub fn read_csv(input: impl std::io::Read, path: &Path, has_labels: bool) -> Result<Dataset> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(input);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let line = line + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line,
            msg: e.to_string(),
        })?;
        if width.is_some_and(|w| w != record.len()) {
            return Err(Error::Format {
                path: path.into(),
                msg: format!(
                    "line {line} has {} columns, earlier lines have {}",
                    record.len(),
                    width.unwrap()
                ),
            });
        }
        width = Some(record.len());
        let n_feat = record.len() - usize::from(has_labels);
        if n_feat == 0 {
            return Err(Error::Format {
                path: path.into(),
                msg: format!("line {line} has no feature columns"),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let bad = |msg: String| Error::Parse {
                path: path.into(),
                line,
                msg,
            };
            if col < n_feat {
                data.push(
                    cell.parse::<f64>()
                        .map_err(|_| bad(format!("column {}: '{cell}' is not a number", col + 1)))?,
                );
            } else {
                labels.push(
                    cell.parse::<usize>()
                        .map_err(|_| bad(format!("label '{cell}' is not a class id")))?,
                );
            }
        }
    }
    let rows = data.len() / width.map_or(1, |w| (w - usize::from(has_labels)).max(1));
    if rows == 0 {
        return Err(Error::Format {
            path: path.into(),
            msg: "no rows".into(),
        });
    }
    let x = Matrix::from_vec(rows, data.len() / rows, data)?;
    let labels = has_labels.then_some(labels);
    let c = labels.as_ref().map(|l| l.iter().max().map_or(1, |m| m + 1));
    Ok(Dataset::new(x, labels, c)?)
}

/// Shortest round-trip decimal form of every feature, label last when present.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = ::csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let mut fields = Vec::with_capacity(ds.dim() + 1);
    for (i, row) in ds.features().row_iter().enumerate() {
        fields.clear();
        fields.extend(row.iter().map(f64::to_string));
        if let Some(l) = ds.labels() {
            fields.push(l[i].to_string());
        }
        w.write_record(&fields).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// A table with a header row, for results and embeddings.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = ::csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Appends rows to a table, writing the header first if the file is new.
pub fn append_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let fresh = !path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = ::csv::Writer::from_writer(file);
    if fresh {
        w.write_record(header).map_err(|e| csv_io(path, e))?;
    }
    for r in rows {
        w.write_record(&r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_io(path: &Path, e: ::csv::Error) -> Error {
    match e.into_kind() {
        ::csv::ErrorKind::Io(source) => Error::Io {
            path: path.into(),
            source,
        },
        other => Error::Format {
            path: path.into(),
            msg: format!("{other:?}"),
        },
    }
}

/// Writes a plain matrix, one row per line, no header.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(",")).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    Ok(load_csv(path, false)?.into_parts().0)
}

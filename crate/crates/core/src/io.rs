//! File formats: CSV matrices with a header row, JSON for everything else.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

/// Writes `m` with the given column names; `names` of `None` means
/// `x0, x1, …`.
pub fn write_matrix(path: impl AsRef<Path>, m: &Array2<f64>, names: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = match names {
        Some(n) if n.len() == m.ncols() => n.to_vec(),
        Some(n) => return Err(Error::shape(m.ncols(), n.len())),
        None => (0..m.ncols()).map(|j| format!("x{j}")).collect(),
    };
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a headered numeric CSV into a matrix and its column names.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<(Array2<f64>, Vec<String>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let names: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_owned).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != names.len() {
            return Err(Error::Parse(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                rows + 1,
                rec.len(),
                names.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{}: `{field}` is not a number", path.display())))?;
            data.push(v);
        }
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, names.len()), data).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((m, names))
}

pub fn write_vector(path: impl AsRef<Path>, v: &Array1<f64>, name: &str) -> Result<()> {
    let m = v.clone().insert_axis(ndarray::Axis(1));
    write_matrix(path, &m, Some(&[name.to_owned()]))
}

/// Reads a single-column CSV.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Array1<f64>> {
    let (m, _) = read_matrix(path.as_ref())?;
    if m.ncols() != 1 {
        return Err(Error::shape(1, m.ncols()));
    }
    Ok(m.column(0).to_owned())
}

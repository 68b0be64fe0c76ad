//! Labelled-matrix CSV files and numeric formatting shared by the writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Format `v` with `digits` significant digits, `%g` style.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, v);
        // trim mantissa zeros: 1.50000e-7 -> 1.5e-7
        let (mant, e) = s.split_once('e').unwrap();
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, v);
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Square matrix with row and column labels; first header cell is empty.
pub fn write_labelled_matrix(path: &Path, labels: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend((0..m.ncols()).map(|j| fmt_sig(m[(i, j)], 12)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_labelled_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let labels: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let p = labels.len();
    let mut m = DMatrix::zeros(p, p);
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if i >= p || rec.len() != p + 1 {
            return Err(Error::invalid(format!(
                "{}: matrix is not {p}x{p}",
                path.display()
            )));
        }
        if rec[0] != labels[i] {
            return Err(Error::invalid(format!(
                "{}: row label `{}` does not match column label `{}`",
                path.display(),
                &rec[0],
                labels[i]
            )));
        }
        for j in 0..p {
            m[(i, j)] = rec[j + 1].trim().parse::<f64>().map_err(|_| {
                Error::invalid(format!("{}: bad number `{}`", path.display(), &rec[j + 1]))
            })?;
        }
        rows += 1;
    }
    if rows != p {
        return Err(Error::invalid(format!(
            "{}: expected {p} rows, found {rows}",
            path.display()
        )));
    }
    Ok((labels, m))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

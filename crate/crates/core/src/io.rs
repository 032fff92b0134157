//! Plain-text matrix and vector files.
//!
//! A matrix file starts with `rows,cols` and then holds one comma-separated row
//! per line. Numbers are written with 17 significant digits so they read back
//! bit-exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Formats a float with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{}` is not a number", tok.trim())))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!(
            "line {line}: non-finite value `{}`",
            tok.trim()
        )));
    }
    Ok(v)
}

/// Parses the matrix format.
pub fn parse_matrix_csv(text: &str) -> Result<DenseMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<&str> = header.split(',').collect();
    if dims.len() != 2 {
        return Err(Error::Parse(format!(
            "header `{header}` must be `rows,cols`"
        )));
    }
    let parse_dim = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad dimension `{}` in header", s.trim())))
    };
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    if rows == 0 || cols == 0 {
        return Err(Error::Parse("matrix dimensions must be positive".into()));
    }
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != cols {
            return Err(Error::Parse(format!(
                "line {line_no}: expected {cols} values, found {}",
                toks.len()
            )));
        }
        for t in toks {
            data.push(parse_f64(t, line_no)?);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse(format!("expected {rows} rows, found {seen}")));
    }
    DenseMatrix::new(rows, cols, data)
}

/// Writes the matrix format.
pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = format!("{},{}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format_f64(*x)).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// A vector as a one-column CSV with a header line naming it.
pub fn vector_to_csv(name: &str, v: &[f64]) -> String {
    let mut out = format!("{name}\n");
    for x in v {
        let _ = writeln!(out, "{}", format_f64(*x));
    }
    out
}

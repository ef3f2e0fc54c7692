use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use liftrec::solvers::fmt_f64;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliError;

/// In-memory CSV with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self::with_header(header.iter().map(|h| h.to_string()).collect())
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn f(v: f64) -> String {
    fmt_f64(v)
}

pub fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical(format!("cannot serialise summary: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Row-major CSV preceded by a `# rows,cols` comment line.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = format!("# {},{}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>, CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines
        .next()
        .and_then(|l| l.trim().strip_prefix('#'))
        .ok_or_else(|| CliError::Config("matrix CSV must start with `# rows,cols`".into()))?;
    let dims: Vec<usize> = head
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("bad matrix header `{head}`: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(CliError::Config(format!("bad matrix header `{head}`")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("matrix row {}: {e}", i + 1)))?;
        if vals.len() != cols {
            return Err(CliError::Config(format!(
                "matrix row {} has {} entries, expected {cols}",
                i + 1,
                vals.len()
            )));
        }
        data.extend(vals);
    }
    if data.len() != rows * cols {
        return Err(CliError::Config(format!(
            "matrix has {} rows, header says {rows}",
            data.len() / cols.max(1)
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// One integer label per line.
pub fn labels_from_text(text: &str) -> Result<Vec<usize>, CliError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Config(format!("bad label `{l}`: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_matrix_is_a_config_error() {
        assert!(matrix_from_csv("1,2\n").is_err());
        assert!(matrix_from_csv("# 2,2\n1,2\n3\n").is_err());
    }

    #[test]
    fn labels_parse() {
        assert_eq!(labels_from_text("0\n1\n\n1\n").unwrap(), vec![0, 1, 1]);
    }
}

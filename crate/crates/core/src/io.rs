//! CSV exchange of scenario matrices: one scenario per row, one header row.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::Matrix;

/// Reads a matrix from a CSV file with a header row. When `cols` is given
/// the column count must match.
pub fn read_matrix(path: &Path, cols: Option<usize>) -> Result<Matrix> {
    let mut reader = csv::Reader::from_path(path)?;
    let width = reader.headers()?.len();
    if let Some(c) = cols {
        if c != width {
            return Err(Error::Input(format!(
                "{}: expected {c} columns, found {width}",
                path.display()
            )));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Input(format!(
                    "{}: row {}, column {}: '{field}' is not a number",
                    path.display(),
                    line + 1,
                    col + 1
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::new(rows, width, data)
}

/// Writes a matrix with headers `{prefix}1, {prefix}2, …`.
pub fn write_matrix(path: &Path, m: &Matrix, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=m.cols()).map(|c| format!("{prefix}{c}")))?;
    for row in m.iter_rows() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("scendo-io-{}-{name}", std::process::id()))
    }

    #[test]
    fn round_trip_is_exact() {
        let m = Matrix::from_rows(&[vec![0.1, -2.5e-7], vec![1.0 / 3.0, 4.0]]).unwrap();
        let p = temp("rt.csv");
        write_matrix(&p, &m, "a").unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("a1,a2\n"));
        assert_eq!(read_matrix(&p, Some(2)).unwrap(), m);
        assert!(read_matrix(&p, Some(3)).is_err());
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn bad_cells_name_their_position() {
        let p = temp("bad.csv");
        std::fs::write(&p, "e1,e2\n1,2\n3,x\n").unwrap();
        let err = read_matrix(&p, None).unwrap_err().to_string();
        assert!(err.contains("row 2, column 2"), "{err}");
        std::fs::remove_file(p).ok();
    }
}

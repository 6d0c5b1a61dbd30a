//! JSON helpers for matrices and vectors.
//!
//! Matrices travel as row arrays (`[[a11, a12], [a21, a22]]`) everywhere in
//! the toolkit's file formats.

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use crate::error::{Error, Result};

pub fn rows_from_mat(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("matrix needs at least one row".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidConfig(
            "matrix rows must be non-empty and of equal length".into(),
        ));
    }
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

pub fn rows_from_json(v: &Value) -> Result<Vec<Vec<f64>>> {
    serde_json::from_value(v.clone()).map_err(Error::from)
}

pub fn vec_from_json(v: &Value) -> Result<DVector<f64>> {
    let data: Vec<f64> = serde_json::from_value(v.clone())?;
    Ok(DVector::from_vec(data))
}

/// Flatten a matrix row-major, the layout used by kernel-table JSON.
pub fn flat_from_mat(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn mat_from_flat(flat: &[f64], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if flat.len() != nrows * ncols {
        return Err(Error::DimensionMismatch(format!(
            "expected {} entries for a {nrows}x{ncols} matrix, got {}",
            nrows * ncols,
            flat.len()
        )));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, flat))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rows() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let rows = rows_from_mat(&m);
        assert_eq!(rows, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(mat_from_rows(&rows).unwrap(), m);
        assert_eq!(mat_from_flat(&flat_from_mat(&m), 2, 3).unwrap(), m);
    }

    #[test]
    fn rejects_ragged() {
        assert!(mat_from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}

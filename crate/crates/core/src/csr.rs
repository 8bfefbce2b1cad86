//! Compressed sparse row storage.
//!
//! An `rows x cols` matrix with `nnz` stored entries is held in three arrays:
//!
//! - `row_ptr` (length `rows + 1`): row `i` occupies `row_ptr[i]..row_ptr[i + 1]`
//! - `col_idx` (length `nnz`): column of each stored entry, strictly increasing within a row
//! - `values` (length `nnz`): the stored entries, in row-major order
//!
//! ```
//! use sparsemm::csr::{build_csr, Triplet};
//!
//! // [ .  .  1  2 ]
//! // [ .  .  3  . ]
//! let a = build_csr(
//!     &[Triplet::new(0, 2, 1.0), Triplet::new(0, 3, 2.0), Triplet::new(1, 2, 3.0)],
//!     2,
//!     4,
//! )
//! .unwrap();
//! assert_eq!(a.row_ptr(), &[0, 2, 3]);
//! assert_eq!(a.col_idx(), &[2, 3, 2]);
//! ```

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// One `(row, col, value)` entry used to assemble a [`CsrMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f32,
}

impl Triplet {
    pub fn new(row: usize, col: usize, value: f32) -> Self {
        Self { row, col, value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f32>,
}

impl CsrMatrix {
    /// Assembles a matrix from raw arrays and checks every structural invariant.
    pub fn try_from_parts(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let a = Self::from_raw_parts(rows, cols, row_ptr, col_idx, values);
        let report = a.validate();
        if report.is_valid() {
            Ok(a)
        } else {
            Err(Error::InvalidCsr(report.to_string()))
        }
    }

    /// Assembles a matrix from raw arrays without checking them.
    ///
    /// Kernels assume a valid matrix; run [`CsrMatrix::validate`] on anything
    /// that did not come out of this crate's constructors.
    pub fn from_raw_parts(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f32>,
    ) -> Self {
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self::from_raw_parts(rows, cols, vec![0; rows + 1], Vec::new(), Vec::new())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    #[inline]
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Positions of row `i` inside `col_idx` / `values`.
    #[inline]
    pub fn row_range(&self, i: usize) -> Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Number of stored entries in row `i`.
    #[inline]
    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// Same sparsity pattern carrying a new set of values.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a pattern with {} nonzeros",
                values.len(),
                self.nnz()
            )));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn into_parts(self) -> (usize, usize, Vec<usize>, Vec<usize>, Vec<f32>) {
        (
            self.rows,
            self.cols,
            self.row_ptr,
            self.col_idx,
            self.values,
        )
    }

    pub fn to_dense(&self) -> DenseMatrix {
        csr_to_dense(self)
    }

    /// Checks every structural invariant and lists the violations found.
    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

/// Builds a CSR matrix from unordered triplets. Duplicates are rejected.
pub fn build_csr(triplets: &[Triplet], rows: usize, cols: usize) -> Result<CsrMatrix> {
    for t in triplets {
        if t.row >= rows || t.col >= cols {
            return Err(Error::OutOfBounds {
                row: t.row,
                col: t.col,
                rows,
                cols,
            });
        }
    }

    let mut sorted = triplets.to_vec();
    sorted.sort_by_key(|t| (t.row, t.col));
    if let Some(w) = sorted
        .windows(2)
        .find(|w| (w[0].row, w[0].col) == (w[1].row, w[1].col))
    {
        return Err(Error::DuplicateEntry {
            row: w[0].row,
            col: w[0].col,
        });
    }

    let mut row_ptr = vec![0usize; rows + 1];
    for t in &sorted {
        row_ptr[t.row + 1] += 1;
    }
    for i in 0..rows {
        row_ptr[i + 1] += row_ptr[i];
    }
    let col_idx = sorted.iter().map(|t| t.col).collect();
    let values = sorted.iter().map(|t| t.value).collect();
    Ok(CsrMatrix::from_raw_parts(
        rows, cols, row_ptr, col_idx, values,
    ))
}

pub fn csr_to_dense(a: &CsrMatrix) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        for p in a.row_range(i) {
            d.set(i, a.col_idx[p], a.values[p]);
        }
    }
    d
}

/// Compresses a dense matrix, dropping exact zeros.
pub fn dense_to_csr(d: &DenseMatrix) -> CsrMatrix {
    let mut row_ptr = Vec::with_capacity(d.rows() + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for i in 0..d.rows() {
        for (j, &v) in d.row(i).iter().enumerate() {
            if v != 0.0 {
                col_idx.push(j);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::from_raw_parts(d.rows(), d.cols(), row_ptr, col_idx, values)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    RowPtrLength { expected: usize, found: usize },
    RowPtrStart { found: usize },
    RowPtrEnd { expected: usize, found: usize },
    RowPtrDecreasing { row: usize },
    ValuesLength { col_idx: usize, values: usize },
    ColumnOutOfRange { row: usize, col: usize },
    ColumnsNotIncreasing { row: usize },
}

impl Violation {
    /// Row the violation was detected in, if it is tied to one.
    pub fn row(&self) -> Option<usize> {
        match *self {
            Violation::RowPtrDecreasing { row }
            | Violation::ColumnOutOfRange { row, .. }
            | Violation::ColumnsNotIncreasing { row } => Some(row),
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowPtrLength { expected, found } => {
                write!(f, "row_ptr has length {found}, expected {expected}")
            }
            Violation::RowPtrStart { found } => write!(f, "row_ptr[0] is {found}, expected 0"),
            Violation::RowPtrEnd { expected, found } => {
                write!(f, "row_ptr ends at {found}, expected nnz = {expected}")
            }
            Violation::RowPtrDecreasing { row } => {
                write!(f, "row_ptr not non-decreasing at row {row}")
            }
            Violation::ValuesLength { col_idx, values } => {
                write!(f, "{values} values for {col_idx} column indices")
            }
            Violation::ColumnOutOfRange { row, col } => {
                write!(f, "column index out of range: {col} in row {row}")
            }
            Violation::ColumnsNotIncreasing { row } => {
                write!(f, "column indices not strictly increasing in row {row}")
            }
        }
    }
}

/// Result of [`validate`]; empty when the matrix satisfies every invariant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in self.violations.iter().enumerate() {
            if n > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate(a: &CsrMatrix) -> ValidationReport {
    let mut violations = Vec::new();
    let nnz = a.col_idx.len();

    if a.values.len() != nnz {
        violations.push(Violation::ValuesLength {
            col_idx: nnz,
            values: a.values.len(),
        });
    }
    if a.row_ptr.len() != a.rows + 1 {
        violations.push(Violation::RowPtrLength {
            expected: a.rows + 1,
            found: a.row_ptr.len(),
        });
    }
    let Some(&first) = a.row_ptr.first() else {
        return ValidationReport { violations };
    };
    if first != 0 {
        violations.push(Violation::RowPtrStart { found: first });
    }
    let last = *a.row_ptr.last().unwrap();
    if last != nnz {
        violations.push(Violation::RowPtrEnd {
            expected: nnz,
            found: last,
        });
    }

    for (row, w) in a.row_ptr.windows(2).enumerate() {
        let (start, end) = (w[0], w[1]);
        if end < start {
            violations.push(Violation::RowPtrDecreasing { row });
            continue;
        }
        if end > nnz {
            continue;
        }
        let cols = &a.col_idx[start..end];
        if let Some(&col) = cols.iter().find(|&&c| c >= a.cols) {
            violations.push(Violation::ColumnOutOfRange { row, col });
        }
        if cols.windows(2).any(|c| c[0] >= c[1]) {
            violations.push(Violation::ColumnsNotIncreasing { row });
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1_triplets() -> Vec<Triplet> {
        [
            (0, 2, 1.0),
            (0, 3, 2.0),
            (1, 2, 3.0),
            (2, 0, 4.0),
            (2, 1, 5.0),
            (3, 0, 6.0),
            (4, 0, 7.0),
            (4, 2, 8.0),
            (4, 3, 9.0),
        ]
        .into_iter()
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect()
    }

    fn fig1_dense() -> DenseMatrix {
        DenseMatrix::from_rows(&[
            [0.0, 0.0, 1.0, 2.0],
            [0.0, 0.0, 3.0, 0.0],
            [4.0, 5.0, 0.0, 0.0],
            [6.0, 0.0, 0.0, 0.0],
            [7.0, 0.0, 8.0, 9.0],
        ])
        .unwrap()
    }

    #[test]
    fn builds_example_matrix() {
        let mut t = fig1_triplets();
        t.reverse();
        let a = build_csr(&t, 5, 4).unwrap();
        assert_eq!(a.row_ptr(), &[0, 2, 3, 5, 6, 9]);
        assert_eq!(a.col_idx(), &[2, 3, 2, 0, 1, 0, 0, 2, 3]);
        assert_eq!(a.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        assert!(a.validate().is_valid());
    }

    #[test]
    fn example_dense_round_trip() {
        let a = build_csr(&fig1_triplets(), 5, 4).unwrap();
        assert_eq!(csr_to_dense(&a), fig1_dense());
        assert_eq!(dense_to_csr(&fig1_dense()), a);
    }

    #[test]
    fn empty_triplets() {
        let a = build_csr(&[], 3, 3).unwrap();
        assert_eq!(a.row_ptr(), &[0, 0, 0, 0]);
        assert!(a.col_idx().is_empty() && a.values().is_empty());
        assert_eq!(csr_to_dense(&a), DenseMatrix::zeros(3, 3));
    }

    #[test]
    fn duplicate_rejected() {
        let t = [Triplet::new(1, 1, 1.0), Triplet::new(1, 1, 2.0)];
        assert!(matches!(
            build_csr(&t, 2, 2),
            Err(Error::DuplicateEntry { row: 1, col: 1 })
        ));
    }

    #[test]
    fn out_of_bounds_rejected() {
        assert!(matches!(
            build_csr(&[Triplet::new(0, 4, 1.0)], 5, 4),
            Err(Error::OutOfBounds { col: 4, .. })
        ));
        assert!(matches!(
            build_csr(&[Triplet::new(5, 0, 1.0)], 5, 4),
            Err(Error::OutOfBounds { row: 5, .. })
        ));
    }

    #[test]
    fn zero_and_identity_compress() {
        let z = dense_to_csr(&DenseMatrix::zeros(2, 2));
        assert_eq!(z.row_ptr(), &[0, 0, 0]);
        let id = dense_to_csr(&DenseMatrix::identity(4));
        assert_eq!(id.row_ptr(), &[0, 1, 2, 3, 4]);
        assert_eq!(id.col_idx(), &[0, 1, 2, 3]);
        assert_eq!(id.values(), &[1.0; 4]);
    }

    #[test]
    fn decreasing_row_ptr_reported() {
        let a = CsrMatrix::from_raw_parts(2, 2, vec![0, 2, 1], vec![0], vec![1.0]);
        let report = a.validate();
        assert!(report
            .violations
            .contains(&Violation::RowPtrDecreasing { row: 1 }));
        assert!(report
            .to_string()
            .contains("row_ptr not non-decreasing at row 1"));
    }

    #[test]
    fn column_out_of_range_reported() {
        let a = CsrMatrix::from_raw_parts(1, 3, vec![0, 2], vec![0, 3], vec![1.0, 1.0]);
        let report = a.validate();
        assert_eq!(report.len(), 1);
        assert_eq!(report.violations[0].row(), Some(0));
        assert!(report.to_string().contains("column index out of range"));
    }

    #[test]
    fn unsorted_and_bad_lengths_reported() {
        let a = CsrMatrix::from_raw_parts(1, 3, vec![0, 2], vec![2, 1], vec![1.0]);
        let report = a.validate();
        assert!(report
            .violations
            .contains(&Violation::ColumnsNotIncreasing { row: 0 }));
        assert!(report.violations.contains(&Violation::ValuesLength {
            col_idx: 2,
            values: 1
        }));

        let b = CsrMatrix::from_raw_parts(3, 3, vec![1, 1], vec![], vec![]);
        let report = b.validate();
        assert!(report.violations.contains(&Violation::RowPtrLength {
            expected: 4,
            found: 2
        }));
        assert!(report
            .violations
            .contains(&Violation::RowPtrStart { found: 1 }));
        assert!(report.violations.contains(&Violation::RowPtrEnd {
            expected: 0,
            found: 1
        }));
        assert!(CsrMatrix::try_from_parts(3, 3, vec![1, 1], vec![], vec![]).is_err());
    }

    #[test]
    fn row_nnz_matches_dense_counts() {
        let a = build_csr(&fig1_triplets(), 5, 4).unwrap();
        let d = fig1_dense();
        for i in 0..5 {
            let dense_count = d.row(i).iter().filter(|v| **v != 0.0).count();
            assert_eq!(a.row_nnz(i), dense_count);
        }
    }
}

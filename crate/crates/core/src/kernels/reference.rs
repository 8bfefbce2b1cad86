//! Scalar row-at-a-time kernels, written as plain index loops.
//!
//! Accumulators are `f64`; each result is rounded to `f32` once when stored.

// index loops mirror the textbook formulation on purpose
#![allow(clippy::needless_range_loop)]

use crate::csr::CsrMatrix;
use crate::dense::DenseMatrix;
use crate::error::Result;

use super::{check_fusedmm, check_sddmm, check_spmm};

pub fn sddmm_reference(pattern: &CsrMatrix, c: &DenseMatrix, b: &DenseMatrix) -> Result<Vec<f32>> {
    check_sddmm(pattern, c, b)?;
    let (ia, ja) = (pattern.row_ptr(), pattern.col_idx());
    let n = c.cols();
    let (cd, bd) = (c.data(), b.data());
    let mut avalues = vec![0.0f32; pattern.nnz()];
    for i in 0..pattern.rows() {
        let nnzr = ia[i + 1] - ia[i];
        for j in 0..nnzr {
            let k = ja[ia[i] + j];
            let mut dp = 0.0f64;
            for l in 0..n {
                dp += cd[i * n + l] as f64 * bd[k * n + l] as f64;
            }
            avalues[ia[i] + j] = dp as f32;
        }
    }
    Ok(avalues)
}

pub fn spmm_reference(a: &CsrMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_spmm(a, b)?;
    let (ia, ja, avalues) = (a.row_ptr(), a.col_idx(), a.values());
    let n = b.cols();
    let bd = b.data();
    let mut c = DenseMatrix::zeros(a.rows(), n);
    let mut c_row = vec![0.0f64; n];
    for i in 0..a.rows() {
        c_row.fill(0.0);
        let nnzr = ia[i + 1] - ia[i];
        for j in 0..nnzr {
            let s = avalues[ia[i] + j] as f64;
            let k = ja[ia[i] + j];
            for l in 0..n {
                c_row[l] += s * bd[k * n + l] as f64;
            }
        }
        for l in 0..n {
            c.set(i, l, c_row[l] as f32);
        }
    }
    Ok(c)
}

pub fn fusedmm_reference(
    pattern: &CsrMatrix,
    c: &DenseMatrix,
    b: &DenseMatrix,
    d: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_fusedmm(pattern, c, b, d)?;
    let (ia, ja) = (pattern.row_ptr(), pattern.col_idx());
    let n = c.cols();
    let (cd, bd, dd) = (c.data(), b.data(), d.data());
    let mut e = DenseMatrix::zeros(pattern.rows(), n);
    let mut arow: Vec<f32> = Vec::new();
    let mut e_row = vec![0.0f64; n];
    for i in 0..pattern.rows() {
        let nnzr = ia[i + 1] - ia[i];
        arow.clear();
        for j in 0..nnzr {
            let k = ja[ia[i] + j];
            let mut dp = 0.0f64;
            for l in 0..n {
                dp += cd[i * n + l] as f64 * bd[k * n + l] as f64;
            }
            arow.push(dp as f32);
        }
        e_row.fill(0.0);
        for j in 0..nnzr {
            let s = arow[j] as f64;
            let k = ja[ia[i] + j];
            for l in 0..n {
                e_row[l] += s * dd[k * n + l] as f64;
            }
        }
        for l in 0..n {
            e.set(i, l, e_row[l] as f32);
        }
    }
    Ok(e)
}

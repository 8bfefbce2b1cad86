//! Dense double-precision references and tolerance checks.
//!
//! The oracles never touch the CSR traversal used by the kernels: SDDMM is a
//! full `C * B^T` product sampled afterwards, SpMM is a dense triple loop over
//! a densified A. All accumulation is in `f64` and only the final result is
//! rounded to `f32`.

use std::fmt;

use serde::Serialize;

use crate::csr::CsrMatrix;
use crate::dense::DenseMatrix;
use crate::error::{shape_mismatch, Result};

pub const DEFAULT_ATOL: f64 = 1e-5;
pub const DEFAULT_RTOL: f64 = 1e-4;

pub fn dense_sddmm_oracle(
    c: &DenseMatrix,
    b: &DenseMatrix,
    pattern: &CsrMatrix,
) -> Result<Vec<f32>> {
    if c.rows() != pattern.rows() || b.rows() != pattern.cols() || c.cols() != b.cols() {
        return Err(shape_mismatch(format!(
            "C {}x{}, B {}x{}, pattern {}x{}",
            c.rows(),
            c.cols(),
            b.rows(),
            b.cols(),
            pattern.rows(),
            pattern.cols()
        )));
    }
    let (m, k, n) = (c.rows(), b.rows(), c.cols());
    let mut full = vec![0.0f64; m * k];
    for i in 0..m {
        for j in 0..k {
            let mut acc = 0.0f64;
            for l in 0..n {
                acc += c.get(i, l) as f64 * b.get(j, l) as f64;
            }
            full[i * k + j] = acc;
        }
    }

    let mut out = Vec::with_capacity(pattern.nnz());
    for i in 0..m {
        for p in pattern.row_range(i) {
            out.push(full[i * k + pattern.col_idx()[p]] as f32);
        }
    }
    Ok(out)
}

pub fn dense_spmm_oracle(a_dense: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a_dense.cols() != b.rows() {
        return Err(shape_mismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a_dense.rows(),
            a_dense.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, k, n) = (a_dense.rows(), a_dense.cols(), b.cols());
    let mut acc = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..k {
            let a = a_dense.get(i, j) as f64;
            if a == 0.0 {
                continue;
            }
            for l in 0..n {
                acc[i * n + l] += a * b.get(j, l) as f64;
            }
        }
    }
    DenseMatrix::from_vec(m, n, acc.into_iter().map(|v| v as f32).collect())
}

/// SDDMM oracle scattered into a dense M x K matrix, then multiplied by `d`.
pub fn fused_oracle(
    c: &DenseMatrix,
    b: &DenseMatrix,
    d: &DenseMatrix,
    pattern: &CsrMatrix,
) -> Result<DenseMatrix> {
    if d.rows() != pattern.cols() || d.cols() != c.cols() {
        return Err(shape_mismatch(format!(
            "D is {}x{}, expected {}x{}",
            d.rows(),
            d.cols(),
            pattern.cols(),
            c.cols()
        )));
    }
    let sampled = dense_sddmm_oracle(c, b, pattern)?;
    let mut a = DenseMatrix::zeros(pattern.rows(), pattern.cols());
    for i in 0..pattern.rows() {
        for p in pattern.row_range(i) {
            a.set(i, pattern.col_idx()[p], sampled[p]);
        }
    }
    dense_spmm_oracle(&a, d)
}

/// Outcome of an elementwise `|x - y| <= atol + rtol * max(|x|, |y|)` check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub len: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Element with the largest absolute error (first NaN mismatch if any).
    pub worst_index: Option<usize>,
    /// Number of elements outside tolerance.
    pub failures: usize,
    pub passed: bool,
    pub atol: f64,
    pub rtol: f64,
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} max_abs={:.3e} max_rel={:.3e} failures={}/{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.max_abs_err,
            self.max_rel_err,
            self.failures,
            self.len
        )?;
        if let Some(i) = self.worst_index {
            write!(f, " worst_index={i}")?;
        }
        Ok(())
    }
}

pub fn compare(x: &[f32], y: &[f32], atol: f64, rtol: f64) -> Result<ComparisonReport> {
    if x.len() != y.len() {
        return Err(shape_mismatch(format!(
            "comparing {} values against {}",
            x.len(),
            y.len()
        )));
    }
    let mut report = ComparisonReport {
        len: x.len(),
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst_index: None,
        failures: 0,
        passed: true,
        atol,
        rtol,
    };
    let mut saw_nan = false;
    for (i, (&a, &b)) in x.iter().zip(y).enumerate() {
        let (a, b) = (a as f64, b as f64);
        let abs = (a - b).abs();
        let scale = a.abs().max(b.abs());
        // NaN on either side never satisfies the bound
        let ok = abs <= atol + rtol * scale;
        if !ok {
            report.failures += 1;
        }
        if abs.is_nan() {
            if !saw_nan {
                saw_nan = true;
                report.max_abs_err = f64::NAN;
                report.max_rel_err = f64::NAN;
                report.worst_index = Some(i);
            }
            continue;
        }
        if saw_nan {
            continue;
        }
        if abs > report.max_abs_err || report.worst_index.is_none() {
            report.max_abs_err = abs;
            report.worst_index = Some(i);
        }
        if scale > 0.0 {
            report.max_rel_err = report.max_rel_err.max(abs / scale);
        }
    }
    report.passed = report.failures == 0;
    Ok(report)
}

pub fn compare_dense(
    x: &DenseMatrix,
    y: &DenseMatrix,
    atol: f64,
    rtol: f64,
) -> Result<ComparisonReport> {
    if x.shape() != y.shape() {
        return Err(shape_mismatch(format!(
            "comparing {}x{} against {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    compare(x.data(), y.data(), atol, rtol)
}

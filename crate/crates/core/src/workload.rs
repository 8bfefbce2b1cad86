//! Synthetic inputs: fixed-density sparsity masks, dense operands, and the
//! 72-case benchmark grid.
//!
//! Everything here is a pure function of its arguments. Random streams come
//! from ChaCha8, a counter-based generator, so a given seed reproduces the
//! same bits on every platform.

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// (M, K) pairs of the benchmark grid, in plotting order.
pub const GRID_SHAPES: [(usize, usize); 12] = [
    (1024, 1024),
    (3072, 1024),
    (4096, 1024),
    (2048, 2048),
    (6144, 2048),
    (8192, 2048),
    (4096, 4096),
    (12288, 4096),
    (16384, 4096),
    (8192, 8192),
    (24576, 8192),
    (32768, 8192),
];

pub const GRID_SPARSITIES: [f64; 3] = [0.7, 0.8, 0.9];
pub const GRID_NS: [usize; 2] = [32, 128];

/// Smallest M or K produced by [`scaled_grid`].
pub const MIN_SCALED_DIM: usize = 64;

/// One point of the benchmark grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    /// Rows of A, C and E.
    pub m: usize,
    /// Columns of A; rows of B and D.
    pub k: usize,
    /// Columns of B, C, D and E.
    pub n: usize,
    /// Fraction of zeros in A.
    pub sparsity: f64,
    pub seed: u64,
}

impl BenchmarkCase {
    pub fn new(m: usize, k: usize, n: usize, sparsity: f64, seed: u64) -> Result<Self> {
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got m={m} k={k} n={n}"
            )));
        }
        if !(0.0..1.0).contains(&sparsity) {
            return Err(Error::InvalidArgument(format!(
                "sparsity must lie in [0, 1), got {sparsity}"
            )));
        }
        Ok(Self {
            m,
            k,
            n,
            sparsity,
            seed,
        })
    }

    /// Case with the seed derived from its shape, as used by the grid.
    pub fn seeded(m: usize, k: usize, n: usize, sparsity: f64) -> Result<Self> {
        Self::new(m, k, n, sparsity, case_seed(m, k, n, sparsity))
    }

    pub fn nnz_per_row(&self) -> usize {
        nnz_per_row(self.k, self.sparsity)
    }

    pub fn nnz(&self) -> usize {
        self.m * self.nnz_per_row()
    }

    /// All operands of the three operations for this case.
    pub fn inputs(&self) -> Result<CaseInputs> {
        let pattern = gen_pattern(self.m, self.k, self.sparsity, self.seed)?;
        let streams = split_seed(self.seed);
        Ok(CaseInputs {
            a: gen_values(&pattern, streams[0])?,
            pattern,
            c: gen_dense(self.m, self.n, streams[1]),
            b: gen_dense(self.k, self.n, streams[2]),
            d: gen_dense(self.k, self.n, streams[3]),
        })
    }
}

impl fmt::Display for BenchmarkCase {
    /// Figure-style label, e.g. `8k,8k,128,70%`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}%",
            size_label(self.m),
            size_label(self.k),
            self.n,
            (self.sparsity * 100.0).round()
        )
    }
}

fn size_label(v: usize) -> String {
    if v >= 1024 && v.is_multiple_of(1024) {
        format!("{}k", v / 1024)
    } else {
        v.to_string()
    }
}

/// Generated operands for one case.
///
/// `pattern` is the 0/1 mask used by SDDMM and FusedMM; `a` carries the same
/// pattern with random values for SpMM.
#[derive(Debug, Clone)]
pub struct CaseInputs {
    pub pattern: CsrMatrix,
    pub a: CsrMatrix,
    pub c: DenseMatrix,
    pub b: DenseMatrix,
    pub d: DenseMatrix,
}

/// Nonzeros per row for a row of length `k`: `round(k * (1 - sparsity))`.
pub fn nnz_per_row(k: usize, sparsity: f64) -> usize {
    (k as f64 * (1.0 - sparsity)).round() as usize
}

/// Seed for a grid case: a 64-bit mix of `(M, K, N, round(100 * sparsity))`.
pub fn case_seed(m: usize, k: usize, n: usize, sparsity: f64) -> u64 {
    let pct = (sparsity * 100.0).round() as u64;
    [m as u64, k as u64, n as u64, pct]
        .into_iter()
        .fold(0x5EED_CA5E_0000_0000, |h, v| splitmix64(h ^ v))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seeds for the operands of one case.
fn split_seed(seed: u64) -> [u64; 4] {
    let mut s = seed;
    [0u64; 4].map(|_| {
        s = splitmix64(s);
        s
    })
}

/// Random 0/1 mask with exactly `round(k * (1 - sparsity))` nonzeros in every
/// row, placed uniformly without replacement. Row `i` draws from stream `i`
/// of the seeded generator.
pub fn gen_pattern(m: usize, k: usize, sparsity: f64, seed: u64) -> Result<CsrMatrix> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidArgument(format!(
            "sparsity must lie in [0, 1), got {sparsity}"
        )));
    }
    let per_row = nnz_per_row(k, sparsity);
    if per_row < 1 {
        return Err(Error::DegenerateRow { k, sparsity });
    }

    let mut row_ptr = Vec::with_capacity(m + 1);
    let mut col_idx = Vec::with_capacity(m * per_row);
    row_ptr.push(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..m {
        rng.set_stream(i as u64);
        rng.set_word_pos(0);
        let start = col_idx.len();
        if per_row == k {
            col_idx.extend(0..k);
        } else {
            col_idx.extend(index::sample(&mut rng, k, per_row));
            col_idx[start..].sort_unstable();
        }
        row_ptr.push(col_idx.len());
    }
    let values = vec![1.0; col_idx.len()];
    Ok(CsrMatrix::from_raw_parts(m, k, row_ptr, col_idx, values))
}

/// Dense matrix with entries drawn i.i.d. from the uniform distribution on [-1, 1].
pub fn gen_dense(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-1.0f32..=1.0))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches shape")
}

/// Copy of `pattern` with values uniform on [-1, 1].
pub fn gen_values(pattern: &CsrMatrix, seed: u64) -> Result<CsrMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..pattern.nnz())
        .map(|_| rng.gen_range(-1.0f32..=1.0))
        .collect();
    pattern.with_values(values)
}

/// The 72 benchmark cases: N in {32, 128}, then the twelve (M, K) shapes,
/// then sparsity in {0.7, 0.8, 0.9}.
pub fn full_grid() -> Vec<BenchmarkCase> {
    grid_with(|m, k| (m, k))
}

/// The same 72 cases with M and K divided by `scale_divisor` (floored at
/// [`MIN_SCALED_DIM`]). The divisor must be a power of two dividing 1024.
pub fn scaled_grid(scale_divisor: usize) -> Result<Vec<BenchmarkCase>> {
    if !scale_divisor.is_power_of_two() || 1024 % scale_divisor != 0 {
        return Err(Error::InvalidArgument(format!(
            "scale divisor must be a power of two dividing 1024, got {scale_divisor}"
        )));
    }
    if scale_divisor == 1 {
        return Ok(full_grid());
    }
    Ok(grid_with(|m, k| {
        (
            (m / scale_divisor).max(MIN_SCALED_DIM),
            (k / scale_divisor).max(MIN_SCALED_DIM),
        )
    }))
}

fn grid_with(shape: impl Fn(usize, usize) -> (usize, usize)) -> Vec<BenchmarkCase> {
    let mut cases = Vec::with_capacity(72);
    for n in GRID_NS {
        for (m, k) in GRID_SHAPES {
            let (m, k) = shape(m, k);
            for sparsity in GRID_SPARSITIES {
                cases.push(BenchmarkCase::seeded(m, k, n, sparsity).expect("grid cases are valid"));
            }
        }
    }
    cases
}

//! SDDMM, SpMM and FusedMM over CSR.
//!
//! Each operation exists twice:
//!
//! - `*_reference`: scalar, single-threaded loops, one output row at a time.
//! - [`sddmm`], [`spmm`], [`fusedmm`]: chunked kernels. Nonzeros of a row are
//!   walked in chunks of `vlc` entries; dense rows of length N are held as
//!   `N / 4` four-lane `f64` vectors. SDDMM can split a row across
//!   `nt` contiguous shares. Rows (or row shares) run in parallel on the
//!   configured number of workers.
//!
//! The chunked kernels have fast paths for N = 32 and N = 128. Any other N
//! falls back to the reference loops.
//!
//! Operands and results are `f32`. Both implementations accumulate in `f64`
//! and round once per stored element.
//!
//! Results are a pure function of the inputs: the dot-product reduction uses a
//! fixed pairwise tree over lanes, SpMM accumulates in CSR order, and every
//! task owns a disjoint piece of the output.

mod pool;
mod reference;
mod vectorized;

use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::dense::DenseMatrix;
use crate::error::{shape_mismatch, Error, Result};

pub use reference::{fusedmm_reference, sddmm_reference, spmm_reference};

/// Work-items needed to fill one stack of the target device.
pub const OCCUPANCY_WORK_ITEMS: usize = 4096;

pub const VLC_CHOICES: [usize; 4] = [8, 16, 32, 64];
pub const NT_CHOICES: [usize; 5] = [1, 2, 4, 8, 16];
pub const DEFAULT_VLC: usize = 32;

/// Dense widths with a vectorized fast path.
pub const FAST_PATH_N: [usize; 2] = [32, 128];

/// Tuning knobs for the chunked kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    vlc: usize,
    nt: usize,
    workers: usize,
    prefetch: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            vlc: DEFAULT_VLC,
            nt: 1,
            workers: 0,
            prefetch: true,
        }
    }
}

impl KernelConfig {
    /// `vlc` must be one of 8, 16, 32, 64 and `nt` one of 1, 2, 4, 8, 16.
    pub fn new(vlc: usize, nt: usize) -> Result<Self> {
        if !VLC_CHOICES.contains(&vlc) {
            return Err(Error::InvalidConfig(format!(
                "vlc must be one of {VLC_CHOICES:?}, got {vlc}"
            )));
        }
        if !NT_CHOICES.contains(&nt) {
            return Err(Error::InvalidConfig(format!(
                "nt must be one of {NT_CHOICES:?}, got {nt}"
            )));
        }
        Ok(Self {
            vlc,
            nt,
            ..Self::default()
        })
    }

    /// Worker threads over rows; 0 picks one per available core.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_prefetch(mut self, prefetch: bool) -> Self {
        self.prefetch = prefetch;
        self
    }

    pub fn with_nt(self, nt: usize) -> Result<Self> {
        Ok(Self::new(self.vlc, nt)?
            .with_workers(self.workers)
            .with_prefetch(self.prefetch))
    }

    pub fn vlc(&self) -> usize {
        self.vlc
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn prefetch(&self) -> bool {
        self.prefetch
    }

    /// Worker count after resolving 0 to the machine's parallelism.
    pub fn effective_workers(&self) -> usize {
        match self.workers {
            0 => max_workers(),
            w => w,
        }
    }

    fn check(&self) -> Result<()> {
        Self::new(self.vlc, self.nt).map(|_| ())
    }
}

/// Number of hardware threads available to this process.
pub fn max_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Fraction of the device's work-item slots in use when `m` rows each get
/// `nt` work-items: `(m*nt/4096) / ceil(m*nt/4096)`.
pub fn occupancy(m: usize, nt: usize) -> f64 {
    let items = (m * nt) as f64;
    let waves = (m * nt).div_ceil(OCCUPANCY_WORK_ITEMS) as f64;
    if waves == 0.0 {
        return 0.0;
    }
    (items / OCCUPANCY_WORK_ITEMS as f64) / waves
}

/// Smallest power of two `nt <= 16` that maximizes [`occupancy`] for `m` rows.
pub fn select_nt(m: usize) -> usize {
    let mut best = NT_CHOICES[0];
    let mut best_occ = occupancy(m, best);
    for &nt in &NT_CHOICES[1..] {
        let occ = occupancy(m, nt);
        if occ > best_occ {
            best = nt;
            best_occ = occ;
        }
    }
    best
}

/// Sampled dense-dense product: for every stored position `(i, k)` of
/// `pattern`, the dot product of row `i` of `c` with row `k` of `b`.
///
/// Pattern values are ignored; only the positions matter. The output is in
/// CSR order and has `pattern.nnz()` entries.
pub fn sddmm(
    pattern: &CsrMatrix,
    c: &DenseMatrix,
    b: &DenseMatrix,
    config: &KernelConfig,
) -> Result<Vec<f32>> {
    check_sddmm(pattern, c, b)?;
    config.check()?;
    if !FAST_PATH_N.contains(&c.cols()) {
        return sddmm_reference(pattern, c, b);
    }
    Ok(vectorized::sddmm(pattern, c, b, config))
}

/// Sparse times dense: `a * b`.
///
/// `config.nt` is ignored; each row is one task.
pub fn spmm(a: &CsrMatrix, b: &DenseMatrix, config: &KernelConfig) -> Result<DenseMatrix> {
    check_spmm(a, b)?;
    config.check()?;
    if !FAST_PATH_N.contains(&b.cols()) {
        return spmm_reference(a, b);
    }
    Ok(vectorized::spmm(a, b, config))
}

/// `(c * b^T ⊙ pattern) * d` in one pass per row, without storing the
/// sampled intermediate. Requires `config.nt() == 1`.
pub fn fusedmm(
    pattern: &CsrMatrix,
    c: &DenseMatrix,
    b: &DenseMatrix,
    d: &DenseMatrix,
    config: &KernelConfig,
) -> Result<DenseMatrix> {
    check_fusedmm(pattern, c, b, d)?;
    config.check()?;
    if config.nt != 1 {
        return Err(Error::InvalidConfig(format!(
            "fusedmm runs one work-item per row, got nt={}",
            config.nt
        )));
    }
    if !FAST_PATH_N.contains(&c.cols()) {
        return fusedmm_reference(pattern, c, b, d);
    }
    Ok(vectorized::fusedmm(pattern, c, b, d, config))
}

fn check_structure(a: &CsrMatrix) -> Result<()> {
    let rp = a.row_ptr();
    if rp.len() != a.rows() + 1 || rp[a.rows()] != a.nnz() || a.values().len() != a.nnz() {
        return Err(Error::InvalidCsr(
            "row_ptr/col_idx/values lengths are inconsistent".into(),
        ));
    }
    Ok(())
}

pub(crate) fn check_sddmm(pattern: &CsrMatrix, c: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    check_structure(pattern)?;
    if c.rows() != pattern.rows() {
        return Err(shape_mismatch(format!(
            "C has {} rows, pattern has {}",
            c.rows(),
            pattern.rows()
        )));
    }
    if b.rows() != pattern.cols() {
        return Err(shape_mismatch(format!(
            "B has {} rows, pattern has {} columns",
            b.rows(),
            pattern.cols()
        )));
    }
    if c.cols() != b.cols() {
        return Err(shape_mismatch(format!(
            "C has {} columns, B has {}",
            c.cols(),
            b.cols()
        )));
    }
    Ok(())
}

pub(crate) fn check_spmm(a: &CsrMatrix, b: &DenseMatrix) -> Result<()> {
    check_structure(a)?;
    if a.cols() != b.rows() {
        return Err(shape_mismatch(format!(
            "A has {} columns, B has {} rows",
            a.cols(),
            b.rows()
        )));
    }
    Ok(())
}

pub(crate) fn check_fusedmm(
    pattern: &CsrMatrix,
    c: &DenseMatrix,
    b: &DenseMatrix,
    d: &DenseMatrix,
) -> Result<()> {
    check_sddmm(pattern, c, b)?;
    if d.rows() != pattern.cols() || d.cols() != c.cols() {
        return Err(shape_mismatch(format!(
            "D is {}x{}, expected {}x{}",
            d.rows(),
            d.cols(),
            pattern.cols(),
            c.cols()
        )));
    }
    Ok(())
}

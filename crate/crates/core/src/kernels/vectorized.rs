//! Chunked lane kernels.
//!
//! A dense row of width `N` is held in registers as `V = N / 4` four-lane
//! vectors. Values are stored as `f32` but every product and sum is formed in
//! `f64` lanes and rounded once on store. Nonzeros are consumed `VLC` at a
//! time: the chunk's column indices (and values, for SpMM) are copied into a
//! local block, then an unrolled loop over the block does the per-nonzero
//! vector work. The last chunk of a row or share is shortened to the entries
//! that remain.

use rayon::prelude::*;
use wide::f64x4;

use crate::csr::CsrMatrix;
use crate::dense::DenseMatrix;

use super::{pool, KernelConfig};

const LANES: usize = 4;

/// Minimum flops handed to one parallel leaf.
const LEAF_FLOPS: usize = 1 << 16;

/// How many nonzeros ahead the dense-row prefetch looks.
const PREFETCH_AHEAD: usize = 4;

macro_rules! dispatch {
    ($n:expr, $vlc:expr, $f:ident($($arg:expr),* $(,)?)) => {
        match ($n, $vlc) {
            (32, 8) => $f::<8, 8>($($arg),*),
            (32, 16) => $f::<8, 16>($($arg),*),
            (32, 32) => $f::<8, 32>($($arg),*),
            (32, 64) => $f::<8, 64>($($arg),*),
            (128, 8) => $f::<32, 8>($($arg),*),
            (128, 16) => $f::<32, 16>($($arg),*),
            (128, 32) => $f::<32, 32>($($arg),*),
            (128, 64) => $f::<32, 64>($($arg),*),
            (n, vlc) => unreachable!("no fast path for n={n}, vlc={vlc}"),
        }
    };
}

#[inline(always)]
fn widen(s: &[f32]) -> f64x4 {
    f64x4::new([s[0] as f64, s[1] as f64, s[2] as f64, s[3] as f64])
}

#[inline(always)]
fn load<const V: usize>(src: &[f32]) -> [f64x4; V] {
    let src = &src[..V * LANES];
    std::array::from_fn(|v| widen(&src[v * LANES..(v + 1) * LANES]))
}

#[inline(always)]
fn store<const V: usize>(acc: &[f64x4; V], dst: &mut [f32]) {
    for (d, v) in dst.chunks_exact_mut(LANES).zip(acc) {
        for (x, y) in d.iter_mut().zip(v.to_array()) {
            *x = y as f32;
        }
    }
}

/// Pairwise tree sum: halve the vector count, then halve the lanes.
#[inline(always)]
fn reduce_sum<const V: usize>(mut acc: [f64x4; V]) -> f64 {
    let mut width = V;
    while width > 1 {
        let half = width / 2;
        for i in 0..half {
            acc[i] += acc[i + half];
        }
        width = half;
    }
    let l = acc[0].to_array();
    (l[0] + l[2]) + (l[1] + l[3])
}

#[inline(always)]
fn dot<const V: usize>(lhs: &[f64x4; V], rhs_row: &[f32]) -> f32 {
    let rhs = &rhs_row[..V * LANES];
    let prod: [f64x4; V] =
        std::array::from_fn(|v| lhs[v] * widen(&rhs[v * LANES..(v + 1) * LANES]));
    reduce_sum::<V>(prod) as f32
}

#[inline(always)]
fn axpy<const V: usize>(acc: &mut [f64x4; V], s: f32, x_row: &[f32]) {
    let s = f64x4::splat(s as f64);
    let x = &x_row[..V * LANES];
    for v in 0..V {
        acc[v] += s * widen(&x[v * LANES..(v + 1) * LANES]);
    }
}

#[inline(always)]
fn prefetch<T>(slice: &[T], at: usize) {
    #[cfg(target_arch = "x86_64")]
    if at < slice.len() {
        // SAFETY: prefetch is a hint and never dereferences; the address is in bounds.
        unsafe {
            use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
            _mm_prefetch::<_MM_HINT_T0>(slice.as_ptr().add(at) as *const i8);
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = (slice, at);
}

#[inline(always)]
fn prefetch_row<const V: usize>(dense: &[f32], row: usize) {
    const FLOATS_PER_LINE: usize = 16;
    let start = row * V * LANES;
    for off in (0..V * LANES).step_by(FLOATS_PER_LINE) {
        prefetch(dense, start + off);
    }
}

/// Dense-row prefetches for the nonzero `PREFETCH_AHEAD` positions after `pos`.
#[inline(always)]
fn prefetch_ahead<const V: usize>(cols: &[usize], pos: usize, dense: &[f32]) {
    if let Some(&k) = cols.get(pos + PREFETCH_AHEAD) {
        prefetch_row::<V>(dense, k);
    }
}

fn leaf_len(nnz: usize, tasks: usize, n: usize) -> usize {
    let per_task = (2 * n * nnz / tasks.max(1)).max(1);
    LEAF_FLOPS.div_ceil(per_task).max(1)
}

fn run_tasks<T: Send>(
    tasks: Vec<T>,
    config: &KernelConfig,
    leaf: usize,
    f: impl Fn(T) + Sync + Send,
) {
    let workers = config.effective_workers();
    if workers <= 1 {
        tasks.into_iter().for_each(f);
    } else {
        pool::install(workers, || {
            tasks.into_par_iter().with_min_len(leaf).for_each(f);
        });
    }
}

/// Contiguous run of one row's nonzeros handled by one work-item.
struct Share<'a> {
    row: usize,
    cols: &'a [usize],
    out: &'a mut [f32],
}

/// Splits every row into `nt` contiguous shares of `ceil(nnzr / nt)` nonzeros;
/// trailing shares may be short or empty (empty ones are dropped).
fn split_shares<'a>(pattern: &'a CsrMatrix, nt: usize, out: &'a mut [f32]) -> Vec<Share<'a>> {
    let mut shares = Vec::with_capacity(pattern.rows() * nt);
    let mut rest = out;
    for row in 0..pattern.rows() {
        let range = pattern.row_range(row);
        let nnzr = range.len();
        let nnzt = nnzr.div_ceil(nt);
        let (mut row_out, tail) = std::mem::take(&mut rest).split_at_mut(nnzr);
        rest = tail;
        let mut row_cols = &pattern.col_idx()[range];
        while !row_cols.is_empty() {
            let len = nnzt.min(row_cols.len());
            let (o, o_tail) = std::mem::take(&mut row_out).split_at_mut(len);
            let (c, c_tail) = row_cols.split_at(len);
            shares.push(Share {
                row,
                cols: c,
                out: o,
            });
            row_out = o_tail;
            row_cols = c_tail;
        }
    }
    shares
}

pub(super) fn sddmm(
    pattern: &CsrMatrix,
    c: &DenseMatrix,
    b: &DenseMatrix,
    config: &KernelConfig,
) -> Vec<f32> {
    let mut out = vec![0.0f32; pattern.nnz()];
    let shares = split_shares(pattern, config.nt(), &mut out);
    let leaf = leaf_len(pattern.nnz(), shares.len(), c.cols());
    dispatch!(
        c.cols(),
        config.vlc(),
        sddmm_shares(shares, c, b, config, leaf)
    );
    out
}

fn sddmm_shares<const V: usize, const VLC: usize>(
    shares: Vec<Share<'_>>,
    c: &DenseMatrix,
    b: &DenseMatrix,
    config: &KernelConfig,
    leaf: usize,
) {
    let prefetch = config.prefetch();
    run_tasks(shares, config, leaf, |s| {
        sddmm_share::<V, VLC>(c.row(s.row), b.data(), s.cols, s.out, prefetch)
    });
}

fn sddmm_share<const V: usize, const VLC: usize>(
    c_row: &[f32],
    b: &[f32],
    cols: &[usize],
    out: &mut [f32],
    prefetch_on: bool,
) {
    let n = V * LANES;
    let reg_l = load::<V>(c_row);
    let mut ja_block = [0usize; VLC];
    let mut a_row = [0.0f32; VLC];
    for (chunk, (idx, dst)) in cols.chunks(VLC).zip(out.chunks_mut(VLC)).enumerate() {
        let len = idx.len();
        let base = chunk * VLC;
        if prefetch_on {
            prefetch(cols, base + VLC);
        }
        ja_block[..len].copy_from_slice(idx);
        for l0 in 0..len {
            if prefetch_on {
                prefetch_ahead::<V>(cols, base + l0, b);
            }
            let k = ja_block[l0];
            a_row[l0] = dot(&reg_l, &b[k * n..(k + 1) * n]);
        }
        dst.copy_from_slice(&a_row[..len]);
    }
}

pub(super) fn spmm(a: &CsrMatrix, b: &DenseMatrix, config: &KernelConfig) -> DenseMatrix {
    let n = b.cols();
    let mut c = DenseMatrix::zeros(a.rows(), n);
    let rows: Vec<(usize, &mut [f32])> = c.data_mut().chunks_mut(n).enumerate().collect();
    let leaf = leaf_len(a.nnz(), rows.len(), n);
    dispatch!(n, config.vlc(), spmm_rows(rows, a, b, config, leaf));
    c
}

fn spmm_rows<const V: usize, const VLC: usize>(
    rows: Vec<(usize, &mut [f32])>,
    a: &CsrMatrix,
    b: &DenseMatrix,
    config: &KernelConfig,
    leaf: usize,
) {
    let prefetch = config.prefetch();
    run_tasks(rows, config, leaf, |(i, out)| {
        let range = a.row_range(i);
        spmm_row::<V, VLC>(
            &a.col_idx()[range.clone()],
            &a.values()[range],
            b.data(),
            out,
            prefetch,
        )
    });
}

fn spmm_row<const V: usize, const VLC: usize>(
    cols: &[usize],
    vals: &[f32],
    b: &[f32],
    out: &mut [f32],
    prefetch_on: bool,
) {
    let n = V * LANES;
    let mut c_row = [f64x4::ZERO; V];
    let mut ja_block = [0usize; VLC];
    let mut a_row = [0.0f32; VLC];
    for (chunk, (idx, v)) in cols.chunks(VLC).zip(vals.chunks(VLC)).enumerate() {
        let len = idx.len();
        let base = chunk * VLC;
        if prefetch_on {
            prefetch(cols, base + VLC);
            prefetch(vals, base + VLC);
        }
        ja_block[..len].copy_from_slice(idx);
        a_row[..len].copy_from_slice(v);
        for j0 in 0..len {
            if prefetch_on {
                prefetch_ahead::<V>(cols, base + j0, b);
            }
            let k = ja_block[j0];
            axpy(&mut c_row, a_row[j0], &b[k * n..(k + 1) * n]);
        }
    }
    store(&c_row, out);
}

pub(super) fn fusedmm(
    pattern: &CsrMatrix,
    c: &DenseMatrix,
    b: &DenseMatrix,
    d: &DenseMatrix,
    config: &KernelConfig,
) -> DenseMatrix {
    let n = c.cols();
    let mut e = DenseMatrix::zeros(pattern.rows(), n);
    let rows: Vec<(usize, &mut [f32])> = e.data_mut().chunks_mut(n).enumerate().collect();
    let leaf = leaf_len(2 * pattern.nnz(), rows.len(), n);
    dispatch!(
        n,
        config.vlc(),
        fusedmm_rows(rows, pattern, c, b, d, config, leaf)
    );
    e
}

fn fusedmm_rows<const V: usize, const VLC: usize>(
    rows: Vec<(usize, &mut [f32])>,
    pattern: &CsrMatrix,
    c: &DenseMatrix,
    b: &DenseMatrix,
    d: &DenseMatrix,
    config: &KernelConfig,
    leaf: usize,
) {
    let prefetch = config.prefetch();
    run_tasks(rows, config, leaf, |(i, out)| {
        fusedmm_row::<V, VLC>(
            c.row(i),
            b.data(),
            d.data(),
            &pattern.col_idx()[pattern.row_range(i)],
            out,
            prefetch,
        )
    });
}

/// One output row: per chunk, the sampled dot products go into a register
/// block which the accumulation loop over D consumes right away.
fn fusedmm_row<const V: usize, const VLC: usize>(
    c_row: &[f32],
    b: &[f32],
    d: &[f32],
    cols: &[usize],
    out: &mut [f32],
    prefetch_on: bool,
) {
    let n = V * LANES;
    let reg_l = load::<V>(c_row);
    let mut e_row = [f64x4::ZERO; V];
    let mut ja_block = [0usize; VLC];
    let mut a_row = [0.0f32; VLC];
    for (chunk, idx) in cols.chunks(VLC).enumerate() {
        let len = idx.len();
        let base = chunk * VLC;
        if prefetch_on {
            prefetch(cols, base + VLC);
        }
        ja_block[..len].copy_from_slice(idx);
        for l0 in 0..len {
            if prefetch_on {
                prefetch_ahead::<V>(cols, base + l0, b);
            }
            let k = ja_block[l0];
            a_row[l0] = dot(&reg_l, &b[k * n..(k + 1) * n]);
        }
        for j0 in 0..len {
            if prefetch_on {
                prefetch_ahead::<V>(cols, base + j0, d);
            }
            let k = ja_block[j0];
            axpy(&mut e_row, a_row[j0], &d[k * n..(k + 1) * n]);
        }
    }
    store(&e_row, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_reduction_order() {
        // sequentially 1e17 + 1 - 1e17 is 0; the tree pairs lane 0 with lane 16 first
        let mut lanes = [0.0f32; 32];
        lanes[0] = 1e17;
        lanes[16] = -1e17;
        lanes[1] = 1.0;
        assert_eq!(reduce_sum(load::<8>(&lanes)), 1.0);
        let seq: Vec<f32> = (1..=128).map(|v| v as f32).collect();
        assert_eq!(reduce_sum(load::<32>(&seq)), 8256.0);
    }

    #[test]
    fn shares_are_contiguous_and_cover_rows() {
        // rows with 5, 0 and 9 nonzeros
        let row_ptr = vec![0, 5, 5, 14];
        let col_idx: Vec<usize> = (0..5).chain(0..9).collect();
        let p = CsrMatrix::from_raw_parts(3, 9, row_ptr, col_idx, vec![1.0; 14]);
        let mut out = vec![0.0; 14];
        let shares = split_shares(&p, 4, &mut out);
        let layout: Vec<(usize, usize, usize)> = shares
            .iter()
            .map(|s| (s.row, s.cols[0], s.cols.len()))
            .collect();
        // nnzt = ceil(5/4) = 2 -> [0,2) [2,4) [4,5); ceil(9/4) = 3 -> [0,3) [3,6) [6,9)
        assert_eq!(
            layout,
            vec![
                (0, 0, 2),
                (0, 2, 2),
                (0, 4, 1),
                (2, 0, 3),
                (2, 3, 3),
                (2, 6, 3)
            ]
        );
    }

    #[test]
    fn leaf_len_bounds() {
        assert_eq!(leaf_len(0, 0, 32), LEAF_FLOPS);
        assert_eq!(leaf_len(1 << 20, 1, 128), 1);
    }
}

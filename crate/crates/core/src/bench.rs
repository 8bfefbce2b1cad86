//! Timing harness, flop and byte accounting, and CSV/JSON reports.
//!
//! Each measurement runs the kernel once untimed, then `iterations` timed
//! runs on the same inputs, and keeps the minimum. Input generation and
//! result checking happen outside the timed region.

use std::fmt;
use std::fs::File;
use std::hint::black_box;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, select_nt, KernelConfig};
use crate::workload::{BenchmarkCase, CaseInputs};

pub const DEFAULT_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Sddmm,
    Spmm,
    Fusedmm,
}

impl Operation {
    pub const ALL: [Operation; 3] = [Operation::Sddmm, Operation::Spmm, Operation::Fusedmm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Operation::Sddmm => "sddmm",
            Operation::Spmm => "spmm",
            Operation::Fusedmm => "fusedmm",
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sddmm" => Ok(Operation::Sddmm),
            "spmm" => Ok(Operation::Spmm),
            "fusedmm" => Ok(Operation::Fusedmm),
            other => Err(Error::InvalidArgument(format!(
                "unknown operation '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Implementation {
    Reference,
    Vectorized,
}

impl Implementation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Implementation::Reference => "reference",
            Implementation::Vectorized => "vectorized",
        }
    }
}

impl fmt::Display for Implementation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Implementation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reference" => Ok(Implementation::Reference),
            "vectorized" => Ok(Implementation::Vectorized),
            other => Err(Error::InvalidArgument(format!(
                "unknown implementation '{other}'"
            ))),
        }
    }
}

/// Floating-point operations: one multiply and one add per (nonzero, lane)
/// for SDDMM and SpMM; FusedMM does both.
pub fn flops_of(op: Operation, nnz: u64, n: u64) -> u64 {
    match op {
        Operation::Sddmm | Operation::Spmm => 2 * nnz * n,
        Operation::Fusedmm => 4 * nnz * n,
    }
}

/// Worst- and best-case SDDMM flops per byte.
///
/// Worst case re-reads a row of B for every nonzero and streams the column
/// indices and output values once. Best case reads C, B, the index arrays and
/// the output exactly once.
pub fn arithmetic_intensity_bounds(m: u64, k: u64, n: u64, nnz: u64) -> (f64, f64) {
    let flops = flops_of(Operation::Sddmm, nnz, n) as f64;
    let bytes_worst = 4 * n * nnz + 4 * nnz + 4 * nnz;
    let bytes_best = 4 * (m * n + k * n + 2 * nnz + (m + 1));
    (flops / bytes_worst as f64, flops / bytes_best as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub case: BenchmarkCase,
    pub operation: Operation,
    pub implementation: Implementation,
    pub config: KernelConfig,
    pub nnz: usize,
    pub iterations: usize,
    pub min_time_s: f64,
    pub all_times_s: Vec<f64>,
    pub flops: u64,
    pub gflops_per_s: f64,
    pub ai_worst: f64,
    pub ai_best: f64,
}

/// Runs one kernel on already generated inputs and returns its output
/// flattened to a vector.
pub fn run_kernel(
    op: Operation,
    implementation: Implementation,
    inputs: &CaseInputs,
    config: &KernelConfig,
) -> Result<Vec<f32>> {
    let CaseInputs {
        pattern,
        a,
        c,
        b,
        d,
    } = inputs;
    Ok(match (op, implementation) {
        (Operation::Sddmm, Implementation::Reference) => kernels::sddmm_reference(pattern, c, b)?,
        (Operation::Sddmm, Implementation::Vectorized) => kernels::sddmm(pattern, c, b, config)?,
        (Operation::Spmm, Implementation::Reference) => kernels::spmm_reference(a, b)?.into_vec(),
        (Operation::Spmm, Implementation::Vectorized) => kernels::spmm(a, b, config)?.into_vec(),
        (Operation::Fusedmm, Implementation::Reference) => {
            kernels::fusedmm_reference(pattern, c, b, d)?.into_vec()
        }
        (Operation::Fusedmm, Implementation::Vectorized) => {
            kernels::fusedmm(pattern, c, b, d, config)?.into_vec()
        }
    })
}

/// Generates the case inputs, then times the kernel.
pub fn time_kernel(
    op: Operation,
    implementation: Implementation,
    case: &BenchmarkCase,
    config: &KernelConfig,
    iterations: usize,
) -> Result<BenchResult> {
    let inputs = case.inputs()?;
    time_on_inputs(op, implementation, case, &inputs, config, iterations)
}

/// Times `iterations` runs after one untimed warm-up.
pub fn time_on_inputs(
    op: Operation,
    implementation: Implementation,
    case: &BenchmarkCase,
    inputs: &CaseInputs,
    config: &KernelConfig,
    iterations: usize,
) -> Result<BenchResult> {
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "iterations must be at least 1".into(),
        ));
    }
    black_box(run_kernel(op, implementation, inputs, config)?);

    let mut all_times_s = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        let out = run_kernel(op, implementation, black_box(inputs), config)?;
        all_times_s.push(start.elapsed().as_secs_f64());
        black_box(out);
    }
    let min_time_s = all_times_s.iter().copied().fold(f64::INFINITY, f64::min);

    let nnz = inputs.pattern.nnz();
    let flops = flops_of(op, nnz as u64, case.n as u64);
    let (ai_worst, ai_best) =
        arithmetic_intensity_bounds(case.m as u64, case.k as u64, case.n as u64, nnz as u64);
    Ok(BenchResult {
        case: *case,
        operation: op,
        implementation,
        config: *config,
        nnz,
        iterations,
        min_time_s,
        all_times_s,
        flops,
        gflops_per_s: flops as f64 / min_time_s / 1e9,
        ai_worst,
        ai_best,
    })
}

/// How grid runs pick kernel configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigPolicy {
    pub vlc: usize,
    pub workers: usize,
    pub prefetch: bool,
    /// SDDMM threads per row; `None` uses [`select_nt`] on M.
    pub sddmm_nt: Option<usize>,
}

impl Default for ConfigPolicy {
    fn default() -> Self {
        Self {
            vlc: kernels::DEFAULT_VLC,
            workers: 0,
            prefetch: true,
            sddmm_nt: None,
        }
    }
}

impl ConfigPolicy {
    pub fn config_for(&self, op: Operation, m: usize) -> Result<KernelConfig> {
        let nt = match op {
            Operation::Sddmm => self.sddmm_nt.unwrap_or_else(|| select_nt(m)),
            Operation::Spmm | Operation::Fusedmm => 1,
        };
        Ok(KernelConfig::new(self.vlc, nt)?
            .with_workers(self.workers)
            .with_prefetch(self.prefetch))
    }
}

/// A grid point that could not be measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseFailure {
    pub case: BenchmarkCase,
    pub operation: Operation,
    pub implementation: Implementation,
    pub message: String,
}

pub type GridEntry = std::result::Result<BenchResult, CaseFailure>;

/// Times every (case, operation) pair. Output is grouped by operation, then
/// in grid order. A failing case is recorded and the run continues.
pub fn run_grid(
    grid: &[BenchmarkCase],
    operations: &[Operation],
    implementation: Implementation,
    policy: &ConfigPolicy,
    iterations: usize,
) -> Vec<GridEntry> {
    run_grid_with_progress(grid, operations, implementation, policy, iterations, |_| {})
}

pub fn run_grid_with_progress(
    grid: &[BenchmarkCase],
    operations: &[Operation],
    implementation: Implementation,
    policy: &ConfigPolicy,
    iterations: usize,
    mut progress: impl FnMut(&GridEntry),
) -> Vec<GridEntry> {
    let mut entries: Vec<(usize, usize, GridEntry)> =
        Vec::with_capacity(grid.len() * operations.len());
    for (ci, case) in grid.iter().enumerate() {
        let inputs = case.inputs();
        for (oi, &op) in operations.iter().enumerate() {
            let entry = inputs
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|inputs| {
                    let config = policy.config_for(op, case.m).map_err(|e| e.to_string())?;
                    time_on_inputs(op, implementation, case, inputs, &config, iterations)
                        .map_err(|e| e.to_string())
                })
                .map_err(|message| CaseFailure {
                    case: *case,
                    operation: op,
                    implementation,
                    message,
                });
            progress(&entry);
            entries.push((oi, ci, entry));
        }
    }
    entries.sort_by_key(|(oi, ci, _)| (*oi, *ci));
    entries.into_iter().map(|(_, _, e)| e).collect()
}

pub const CSV_HEADER: [&str; 15] = [
    "op",
    "impl",
    "M",
    "K",
    "N",
    "sparsity",
    "nnz",
    "vlc",
    "nt",
    "workers",
    "iters",
    "min_time_s",
    "gflops",
    "ai_worst",
    "ai_best",
];

/// One CSV/JSON record of a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub op: Operation,
    #[serde(rename = "impl")]
    pub implementation: Implementation,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub sparsity: f64,
    pub nnz: usize,
    pub vlc: usize,
    pub nt: usize,
    pub workers: usize,
    pub iters: usize,
    pub min_time_s: f64,
    pub gflops: f64,
    pub ai_worst: f64,
    pub ai_best: f64,
}

impl From<&BenchResult> for ReportRow {
    fn from(r: &BenchResult) -> Self {
        Self {
            op: r.operation,
            implementation: r.implementation,
            m: r.case.m,
            k: r.case.k,
            n: r.case.n,
            sparsity: r.case.sparsity,
            nnz: r.nnz,
            vlc: r.config.vlc(),
            nt: r.config.nt(),
            workers: r.config.effective_workers(),
            iters: r.iterations,
            min_time_s: r.min_time_s,
            gflops: r.gflops_per_s,
            ai_worst: r.ai_worst,
            ai_best: r.ai_best,
        }
    }
}

/// Grid record: the measurement columns (empty on failure) plus `status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub op: Operation,
    #[serde(rename = "impl")]
    pub implementation: Implementation,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub sparsity: f64,
    pub nnz: usize,
    pub vlc: Option<usize>,
    pub nt: Option<usize>,
    pub workers: Option<usize>,
    pub iters: Option<usize>,
    pub min_time_s: Option<f64>,
    pub gflops: Option<f64>,
    pub ai_worst: Option<f64>,
    pub ai_best: Option<f64>,
    pub status: String,
}

impl From<&GridEntry> for GridRow {
    fn from(e: &GridEntry) -> Self {
        match e {
            Ok(r) => {
                let row = ReportRow::from(r);
                Self {
                    op: row.op,
                    implementation: row.implementation,
                    m: row.m,
                    k: row.k,
                    n: row.n,
                    sparsity: row.sparsity,
                    nnz: row.nnz,
                    vlc: Some(row.vlc),
                    nt: Some(row.nt),
                    workers: Some(row.workers),
                    iters: Some(row.iters),
                    min_time_s: Some(row.min_time_s),
                    gflops: Some(row.gflops),
                    ai_worst: Some(row.ai_worst),
                    ai_best: Some(row.ai_best),
                    status: "ok".into(),
                }
            }
            Err(f) => Self {
                op: f.operation,
                implementation: f.implementation,
                m: f.case.m,
                k: f.case.k,
                n: f.case.n,
                sparsity: f.case.sparsity,
                nnz: f.case.nnz(),
                vlc: None,
                nt: None,
                workers: None,
                iters: None,
                min_time_s: None,
                gflops: None,
                ai_worst: None,
                ai_best: None,
                status: format!("error: {}", f.message),
            },
        }
    }
}

fn write_rows<W: Write, T: Serialize>(header: &[&str], rows: &[T], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(results: &[BenchResult], w: W) -> Result<()> {
    let rows: Vec<ReportRow> = results.iter().map(ReportRow::from).collect();
    write_rows(&CSV_HEADER, &rows, w)
}

/// Writes `results` as CSV to `path`.
pub fn report_csv(results: &[BenchResult], path: impl AsRef<Path>) -> Result<()> {
    write_csv(results, BufWriter::new(File::create(path)?))
}

pub fn write_json<W: Write>(results: &[BenchResult], mut w: W) -> Result<()> {
    let rows: Vec<ReportRow> = results.iter().map(ReportRow::from).collect();
    serde_json::to_writer_pretty(&mut w, &rows)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_grid_csv<W: Write>(entries: &[GridEntry], w: W) -> Result<()> {
    let rows: Vec<GridRow> = entries.iter().map(GridRow::from).collect();
    let mut header = CSV_HEADER.to_vec();
    header.push("status");
    write_rows(&header, &rows, w)
}

pub fn write_grid_json<W: Write>(entries: &[GridEntry], mut w: W) -> Result<()> {
    let rows: Vec<GridRow> = entries.iter().map(GridRow::from).collect();
    serde_json::to_writer_pretty(&mut w, &rows)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn read_grid_csv<R: Read>(r: R) -> Result<Vec<GridRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

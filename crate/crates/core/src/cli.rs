//! Command-line front end: `generate`, `verify`, `bench` and `grid`.
//!
//! Exit status is 0 on success, 1 when a check or I/O step fails and 2 for
//! invalid arguments.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, ConfigPolicy, GridEntry, Implementation, Operation, DEFAULT_ITERATIONS};
use crate::error::{Error, Result};
use crate::io as mio;
use crate::kernels::{self, KernelConfig, NT_CHOICES, VLC_CHOICES};
use crate::oracle::{self, ComparisonReport, DEFAULT_ATOL, DEFAULT_RTOL};
use crate::workload::{self, BenchmarkCase, CaseInputs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// File names written by `generate` and read by `verify --input`.
pub const PATTERN_MTX: &str = "pattern.mtx";
pub const PATTERN_BIN: &str = "pattern.bin";
pub const A_BIN: &str = "a.bin";
pub const C_BIN: &str = "c.bin";
pub const B_BIN: &str = "b.bin";
pub const D_BIN: &str = "d.bin";

#[derive(Debug, Parser)]
#[command(
    name = "sparsemm",
    version,
    about = "CSR SDDMM, SpMM and FusedMM kernels: workloads, verification and benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic case (sparsity pattern and dense operands) to disk
    Generate(GenerateArgs),
    /// Check both implementations against the dense oracles
    Verify(VerifyArgs),
    /// Time one operation on one case
    Bench(BenchArgs),
    /// Time operations over the benchmark grid
    Grid(GridArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CaseArgs {
    /// Rows of the sparse matrix and of C (accepts a `k` suffix, 1k = 1024)
    #[arg(long, default_value = "256", value_parser = parse_size)]
    pub m: usize,
    /// Columns of the sparse matrix, rows of B and D
    #[arg(long, default_value = "256", value_parser = parse_size)]
    pub k: usize,
    /// Dense width
    #[arg(long, default_value = "32", value_parser = parse_size)]
    pub n: usize,
    /// Fraction of zeros per row, in [0, 1)
    #[arg(long, default_value = "0.7", value_parser = parse_sparsity)]
    pub sparsity: f64,
    /// Generator seed [default: derived from M, K, N and sparsity]
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CaseArgs {
    pub fn case(&self) -> Result<BenchmarkCase> {
        match self.seed {
            Some(seed) => BenchmarkCase::new(self.m, self.k, self.n, self.sparsity, seed),
            None => BenchmarkCase::seeded(self.m, self.k, self.n, self.sparsity),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Nonzeros per chunk
    #[arg(long, default_value_t = kernels::DEFAULT_VLC, value_parser = parse_vlc)]
    pub vlc: usize,
    /// SDDMM threads per row [default: chosen from M by occupancy]
    #[arg(long, value_parser = parse_nt)]
    pub nt: Option<usize>,
    /// Worker threads, 0 for all available cores
    #[arg(long, env = "SPARSEMM_WORKERS", default_value_t = 0)]
    pub workers: usize,
    /// Software prefetch of the next chunk
    #[arg(long, default_value_t = true, action = ArgAction::Set, value_name = "BOOL")]
    pub prefetch: bool,
}

impl KernelArgs {
    fn policy(&self) -> ConfigPolicy {
        ConfigPolicy {
            vlc: self.vlc,
            workers: self.workers,
            prefetch: self.prefetch,
            sddmm_nt: self.nt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OpArg {
    Sddmm,
    Spmm,
    Fusedmm,
}

impl From<OpArg> for Operation {
    fn from(op: OpArg) -> Self {
        match op {
            OpArg::Sddmm => Operation::Sddmm,
            OpArg::Spmm => Operation::Spmm,
            OpArg::Fusedmm => Operation::Fusedmm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImplArg {
    Reference,
    Vectorized,
}

impl From<ImplArg> for Implementation {
    fn from(i: ImplArg) -> Self {
        match i {
            ImplArg::Reference => Implementation::Reference,
            ImplArg::Vectorized => Implementation::Vectorized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Operations to check, comma separated [default: all]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub op: Vec<OpArg>,
    /// Read operands written by `generate` from this directory instead of
    /// generating them
    #[arg(long, value_name = "DIR")]
    pub input: Option<PathBuf>,
    /// Absolute tolerance
    #[arg(long, default_value_t = DEFAULT_ATOL)]
    pub atol: f64,
    /// Relative tolerance
    #[arg(long, default_value_t = DEFAULT_RTOL)]
    pub rtol: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Operation to time
    #[arg(long, value_enum, default_value_t = OpArg::Sddmm)]
    pub op: OpArg,
    /// Implementation to time
    #[arg(long = "impl", value_enum, default_value_t = ImplArg::Vectorized)]
    pub implementation: ImplArg,
    /// Timed iterations after one warm-up run
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Report file [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Operations to time, comma separated
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "sddmm,spmm,fusedmm"
    )]
    pub ops: Vec<OpArg>,
    /// Divide M and K of every grid shape by this power of two (floor 64)
    #[arg(long, default_value_t = 1)]
    pub scale_div: usize,
    /// Implementation to time
    #[arg(long = "impl", value_enum, default_value_t = ImplArg::Vectorized)]
    pub implementation: ImplArg,
    /// Timed iterations per case after one warm-up run
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Report file [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Accepts plain integers and a `k`/`K` suffix for multiples of 1024.
pub fn parse_size(s: &str) -> std::result::Result<usize, String> {
    let t = s.trim();
    let (digits, scale) = match t.strip_suffix(['k', 'K']) {
        Some(d) => (d, 1024),
        None => (t, 1),
    };
    let v: usize = digits.parse().map_err(|_| format!("not a size: {s:?}"))?;
    let v = v
        .checked_mul(scale)
        .ok_or_else(|| format!("size too large: {s:?}"))?;
    if v == 0 {
        return Err("size must be positive".into());
    }
    Ok(v)
}

fn parse_sparsity(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if !(0.0..1.0).contains(&v) {
        return Err(format!("sparsity must lie in [0, 1), got {v}"));
    }
    Ok(v)
}

fn parse_choice(s: &str, choices: &[usize]) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("not an integer: {s:?}"))?;
    if !choices.contains(&v) {
        return Err(format!("expected one of {choices:?}, got {v}"));
    }
    Ok(v)
}

fn parse_vlc(s: &str) -> std::result::Result<usize, String> {
    parse_choice(s, &VLC_CHOICES)
}

fn parse_nt(s: &str) -> std::result::Result<usize, String> {
    parse_choice(s, &NT_CHOICES)
}

/// Exit status for an error escaping a subcommand.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_)
        | Error::InvalidConfig(_)
        | Error::DegenerateRow { .. }
        | Error::ShapeMismatch(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `std::env::args`, runs the subcommand and maps the outcome to an
/// exit status.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let stdout = io::stdout();
    let code = match run(&cli, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code)
}

/// Runs a parsed command, writing its report to `out`. Returns the exit
/// status for completed runs.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<u8> {
    match &cli.command {
        Command::Generate(args) => generate(args, out),
        Command::Verify(args) => verify(args, out),
        Command::Bench(args) => bench_one(args, out),
        Command::Grid(args) => grid(args, out),
    }
}

fn generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<u8> {
    let case = args.case.case()?;
    let inputs = case.inputs()?;
    fs::create_dir_all(&args.out)?;
    let dir = &args.out;
    mio::save_matrix_market(&inputs.pattern, dir.join(PATTERN_MTX))?;
    mio::save_csr_binary(&inputs.pattern, dir.join(PATTERN_BIN))?;
    mio::save_csr_binary(&inputs.a, dir.join(A_BIN))?;
    mio::save_dense_binary(&inputs.c, dir.join(C_BIN))?;
    mio::save_dense_binary(&inputs.b, dir.join(B_BIN))?;
    mio::save_dense_binary(&inputs.d, dir.join(D_BIN))?;

    writeln!(out, "case {case} seed={}", case.seed)?;
    writeln!(out, "nnz={}", inputs.pattern.nnz())?;
    for name in [PATTERN_MTX, PATTERN_BIN, A_BIN, C_BIN, B_BIN, D_BIN] {
        writeln!(out, "{}", dir.join(name).display())?;
    }
    Ok(EXIT_OK)
}

/// Loads operands written by `generate`. `a.bin` is optional; without it
/// SpMM runs on the pattern values.
pub fn load_inputs(dir: &Path) -> Result<CaseInputs> {
    let pattern = mio::load_csr_binary(dir.join(PATTERN_BIN))?;
    let a_path = dir.join(A_BIN);
    let a = if a_path.exists() {
        mio::load_csr_binary(a_path)?
    } else {
        pattern.clone()
    };
    Ok(CaseInputs {
        pattern,
        a,
        c: mio::load_dense_binary(dir.join(C_BIN))?,
        b: mio::load_dense_binary(dir.join(B_BIN))?,
        d: mio::load_dense_binary(dir.join(D_BIN))?,
    })
}

fn selected_ops(ops: &[OpArg]) -> Vec<Operation> {
    if ops.is_empty() {
        return Operation::ALL.to_vec();
    }
    let mut out: Vec<Operation> = Vec::new();
    for &op in ops {
        let op = op.into();
        if !out.contains(&op) {
            out.push(op);
        }
    }
    out
}

fn oracle_output(op: Operation, inputs: &CaseInputs) -> Result<Vec<f32>> {
    let CaseInputs {
        pattern,
        a,
        c,
        b,
        d,
    } = inputs;
    Ok(match op {
        Operation::Sddmm => oracle::dense_sddmm_oracle(c, b, pattern)?,
        Operation::Spmm => oracle::dense_spmm_oracle(&a.to_dense(), b)?.into_vec(),
        Operation::Fusedmm => oracle::fused_oracle(c, b, d, pattern)?.into_vec(),
    })
}

fn verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<u8> {
    let inputs = match &args.input {
        Some(dir) => {
            let inputs = load_inputs(dir)?;
            writeln!(
                out,
                "input {} ({}x{}, N={}, nnz={})",
                dir.display(),
                inputs.pattern.rows(),
                inputs.pattern.cols(),
                inputs.c.cols(),
                inputs.pattern.nnz()
            )?;
            inputs
        }
        None => {
            let case = args.case.case()?;
            let inputs = case.inputs()?;
            writeln!(
                out,
                "case {case} seed={} nnz={}",
                case.seed,
                inputs.pattern.nnz()
            )?;
            inputs
        }
    };
    writeln!(out, "tolerance atol={:e} rtol={:e}", args.atol, args.rtol)?;

    let policy = args.kernel.policy();
    let mut all_passed = true;
    for op in selected_ops(&args.op) {
        let expected = oracle_output(op, &inputs)?;
        let config = policy.config_for(op, inputs.pattern.rows())?;
        for implementation in [Implementation::Reference, Implementation::Vectorized] {
            let got = bench::run_kernel(op, implementation, &inputs, &config)?;
            let report = oracle::compare(&got, &expected, args.atol, args.rtol)?;
            all_passed &= report.passed;
            write_report_line(out, op, implementation, &config, &report, &got, &expected)?;
        }
    }
    writeln!(
        out,
        "{}",
        if all_passed {
            "all checks passed"
        } else {
            "verification FAILED"
        }
    )?;
    Ok(if all_passed { EXIT_OK } else { EXIT_FAILURE })
}

fn write_report_line(
    out: &mut dyn Write,
    op: Operation,
    implementation: Implementation,
    config: &KernelConfig,
    report: &ComparisonReport,
    got: &[f32],
    expected: &[f32],
) -> Result<()> {
    write!(
        out,
        "{:<8} {:<10} vlc={:<2} nt={:<2} {}",
        op.as_str(),
        implementation.as_str(),
        config.vlc(),
        config.nt(),
        report
    )?;
    if let (false, Some(i)) = (report.passed, report.worst_index) {
        write!(out, " got={} expected={}", got[i], expected[i])?;
    }
    writeln!(out)?;
    Ok(())
}

fn open_output(path: &Option<PathBuf>) -> Result<Option<io::BufWriter<fs::File>>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Some(io::BufWriter::new(fs::File::create(p)?))
        }
        None => None,
    })
}

fn bench_one(args: &BenchArgs, out: &mut dyn Write) -> Result<u8> {
    let op: Operation = args.op.into();
    if op != Operation::Sddmm && args.kernel.nt.is_some_and(|nt| nt != 1) {
        return Err(Error::InvalidConfig(format!(
            "--nt applies to sddmm only, {op} runs one work-item per row"
        )));
    }
    let case = args.case.case()?;
    let config = args.kernel.policy().config_for(op, case.m)?;
    let result = bench::time_kernel(op, args.implementation.into(), &case, &config, args.iters)?;
    let results = [result];

    let mut file = open_output(&args.out)?;
    let w: &mut dyn Write = match file.as_mut() {
        Some(f) => f,
        None => out,
    };
    match args.format {
        Format::Csv => bench::write_csv(&results, &mut *w)?,
        Format::Json => bench::write_json(&results, &mut *w)?,
    }
    w.flush()?;
    Ok(EXIT_OK)
}

fn grid(args: &GridArgs, out: &mut dyn Write) -> Result<u8> {
    let cases = workload::scaled_grid(args.scale_div)?;
    if args.iters == 0 {
        return Err(Error::InvalidArgument(
            "iterations must be at least 1".into(),
        ));
    }
    let ops = selected_ops(&args.ops);
    let implementation: Implementation = args.implementation.into();
    let total = cases.len() * ops.len();
    let mut done = 0usize;
    let entries = bench::run_grid_with_progress(
        &cases,
        &ops,
        implementation,
        &args.kernel.policy(),
        args.iters,
        |entry: &GridEntry| {
            done += 1;
            match entry {
                Ok(r) => eprintln!(
                    "[{done}/{total}] {} {} {:.3} GFLOP/s",
                    r.operation, r.case, r.gflops_per_s
                ),
                Err(f) => eprintln!(
                    "[{done}/{total}] {} {} failed: {}",
                    f.operation, f.case, f.message
                ),
            }
        },
    );

    let mut file = open_output(&args.out)?;
    let w: &mut dyn Write = match file.as_mut() {
        Some(f) => f,
        None => out,
    };
    match args.format {
        Format::Csv => bench::write_grid_csv(&entries, &mut *w)?,
        Format::Json => bench::write_grid_json(&entries, &mut *w)?,
    }
    w.flush()?;
    // failed cases are reported in the status column, not the exit code
    Ok(EXIT_OK)
}

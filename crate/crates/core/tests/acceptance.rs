//! Acceptance criteria, one line of output per criterion.
//!
//! Runs as a single test so the timing criteria do not compete with each
//! other for cores. Lines go straight to stdout and are visible without
//! `--nocapture`.

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsemm::bench::{
    self, arithmetic_intensity_bounds, read_grid_csv, Implementation, Operation, CSV_HEADER,
};
use sparsemm::csr::{build_csr, csr_to_dense, dense_to_csr, Triplet};
use sparsemm::dense::DenseMatrix;
use sparsemm::io;
use sparsemm::kernels::{
    self, fusedmm, fusedmm_reference, max_workers, occupancy, sddmm, sddmm_reference, select_nt,
    spmm, spmm_reference, KernelConfig, NT_CHOICES, VLC_CHOICES,
};
use sparsemm::oracle::{
    compare, compare_dense, dense_sddmm_oracle, dense_spmm_oracle, fused_oracle,
};
use sparsemm::workload::{BenchmarkCase, CaseInputs};

const ATOL: f64 = 1e-5;
const RTOL: f64 = 1e-4;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, elapsed: Duration) -> Result<(), String> {
    check(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })
}

fn fig1() -> Outcome {
    let start = Instant::now();
    // dense image of the 5x4 example, values numbered in row-major order
    let rows = [
        [0., 0., 1., 2.],
        [0., 0., 3., 0.],
        [4., 5., 0., 0.],
        [6., 0., 0., 0.],
        [7., 0., 8., 9.],
    ];
    let mut triplets = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                triplets.push(Triplet::new(i, j, v));
            }
        }
    }
    triplets.reverse();
    let a = build_csr(&triplets, 5, 4).map_err(|e| e.to_string())?;
    check(a.row_ptr() == [0, 2, 3, 5, 6, 9], || {
        format!("ia = {:?}", a.row_ptr())
    })?;
    check(a.col_idx() == [2, 3, 2, 0, 1, 0, 0, 2, 3], || {
        format!("ja = {:?}", a.col_idx())
    })?;
    check(a.values() == [1., 2., 3., 4., 5., 6., 7., 8., 9.], || {
        format!("avalue = {:?}", a.values())
    })?;

    let dense = DenseMatrix::from_rows(&rows).unwrap();
    check(csr_to_dense(&a) == dense, || {
        "csr_to_dense differs from the dense image".into()
    })?;
    check(dense_to_csr(&dense) == a, || {
        "dense_to_csr differs from build_csr".into()
    })?;
    check(dense_to_csr(&csr_to_dense(&a)) == a, || {
        "CSR round trip not exact".into()
    })?;

    let mut mtx = Vec::new();
    io::write_matrix_market(&a, &mut mtx).unwrap();
    check(
        io::read_matrix_market(mtx.as_slice()).ok() == Some(a.clone()),
        || "Matrix Market round trip".into(),
    )?;
    let mut bin = Vec::new();
    io::write_csr_binary(&a, &mut bin).unwrap();
    check(
        io::read_csr_binary(bin.as_slice()).ok() == Some(a.clone()),
        || "binary round trip".into(),
    )?;

    within(Duration::from_secs(1), start.elapsed())?;
    Ok(format!(
        "exact ia/ja/avalue and round trips in {:.2?}",
        start.elapsed()
    ))
}

/// The 50 randomized cases shared by criteria 2 and 3.
fn random_cases() -> Vec<(BenchmarkCase, KernelConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x00AC_CE97);
    (0..50)
        .map(|_| {
            let m = rng.gen_range(64..=1024);
            let k = rng.gen_range(64..=1024);
            let n = [32, 128][rng.gen_range(0..2)];
            let sparsity = [0.7, 0.8, 0.9][rng.gen_range(0..3)];
            let case = BenchmarkCase::new(m, k, n, sparsity, rng.gen()).unwrap();
            let vlc = VLC_CHOICES[rng.gen_range(0..VLC_CHOICES.len())];
            let nt = NT_CHOICES[rng.gen_range(0..NT_CHOICES.len())];
            (case, KernelConfig::new(vlc, nt).unwrap())
        })
        .collect()
}

/// Vectorized kernels against the dense oracles and the scalar references.
fn oracle_equivalence(case: &BenchmarkCase, cfg: &KernelConfig) -> Result<(), String> {
    let CaseInputs {
        pattern,
        a,
        c,
        b,
        d,
    } = case.inputs().map_err(|e| e.to_string())?;
    let fail = |what: &str, r: &sparsemm::oracle::ComparisonReport| -> Result<(), String> {
        check(r.passed, || {
            format!("{case} vlc={} nt={}: {what}: {r}", cfg.vlc(), cfg.nt())
        })
    };
    let cfg1 = cfg.with_nt(1).unwrap();

    let s = sddmm(&pattern, &c, &b, cfg).unwrap();
    fail(
        "sddmm vs oracle",
        &compare(
            &s,
            &dense_sddmm_oracle(&c, &b, &pattern).unwrap(),
            ATOL,
            RTOL,
        )
        .unwrap(),
    )?;
    fail(
        "sddmm vs reference",
        &compare(&s, &sddmm_reference(&pattern, &c, &b).unwrap(), ATOL, RTOL).unwrap(),
    )?;

    let y = spmm(&a, &b, cfg).unwrap();
    let a_dense = a.to_dense();
    fail(
        "spmm vs oracle",
        &compare_dense(&y, &dense_spmm_oracle(&a_dense, &b).unwrap(), ATOL, RTOL).unwrap(),
    )?;
    fail(
        "spmm vs reference",
        &compare_dense(&y, &spmm_reference(&a, &b).unwrap(), ATOL, RTOL).unwrap(),
    )?;

    let e = fusedmm(&pattern, &c, &b, &d, &cfg1).unwrap();
    fail(
        "fusedmm vs oracle",
        &compare_dense(&e, &fused_oracle(&c, &b, &d, &pattern).unwrap(), ATOL, RTOL).unwrap(),
    )?;
    fail(
        "fusedmm vs reference",
        &compare_dense(
            &e,
            &fusedmm_reference(&pattern, &c, &b, &d).unwrap(),
            ATOL,
            RTOL,
        )
        .unwrap(),
    )?;
    Ok(())
}

fn oracle_cases() -> Outcome {
    let start = Instant::now();
    let cases = random_cases();
    for (case, cfg) in &cases {
        oracle_equivalence(case, cfg)?;
    }
    within(Duration::from_secs(120), start.elapsed())?;
    Ok(format!(
        "{} cases x 3 ops vs oracle and reference in {:.2?}",
        cases.len(),
        start.elapsed()
    ))
}

fn fusion_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for (case, cfg) in random_cases() {
        let CaseInputs {
            pattern, c, b, d, ..
        } = case.inputs().unwrap();
        let cfg1 = cfg.with_nt(1).unwrap();
        let fused = fusedmm(&pattern, &c, &b, &d, &cfg1).unwrap();
        let sampled = pattern
            .with_values(sddmm(&pattern, &c, &b, &cfg).unwrap())
            .unwrap();
        let composed = spmm(&sampled, &d, &cfg1).unwrap();
        let r = compare_dense(&fused, &composed, ATOL, RTOL).unwrap();
        check(r.passed, || format!("{case}: fusedmm vs spmm(sddmm): {r}"))?;
        worst = worst.max(r.max_abs_err);
    }
    Ok(format!(
        "fusedmm = spmm(sddmm) on 50 cases, max_abs={worst:.3e}"
    ))
}

fn determinism() -> Outcome {
    let inputs = BenchmarkCase::seeded(1024, 1024, 128, 0.8)
        .unwrap()
        .inputs()
        .unwrap();
    let max = max_workers();
    let mut workers = vec![1, 2, max];
    workers.sort_unstable();
    workers.dedup();
    let mut runs = 0;
    for (vlc, nt) in [(32, select_nt(1024)), (16, 8), (64, 1)] {
        let base = KernelConfig::new(vlc, nt).unwrap();
        let mut outputs: Vec<Vec<Vec<u32>>> = Vec::new();
        for &w in &workers {
            for prefetch in [true, false] {
                let cfg = base.with_workers(w).with_prefetch(prefetch);
                let out: Vec<Vec<u32>> = Operation::ALL
                    .iter()
                    .map(|&op| {
                        let cfg = if op == Operation::Sddmm {
                            cfg
                        } else {
                            cfg.with_nt(1).unwrap()
                        };
                        let v = bench::run_kernel(op, Implementation::Vectorized, &inputs, &cfg)
                            .unwrap();
                        v.iter().map(|x| x.to_bits()).collect()
                    })
                    .collect();
                outputs.push(out);
                runs += 1;
            }
        }
        check(outputs.windows(2).all(|w| w[0] == w[1]), || {
            format!("outputs differ across workers/prefetch at vlc={vlc} nt={nt}")
        })?;
    }
    Ok(format!(
        "bitwise identical over workers {workers:?} x prefetch on/off ({runs} runs, 3 ops each)"
    ))
}

fn nt_selection() -> Outcome {
    let start = Instant::now();
    check(select_nt(1024) == 4, || {
        format!("select_nt(1024) = {}", select_nt(1024))
    })?;
    check(occupancy(3072, 4) == 1.0, || {
        format!("occupancy(3072, 4) = {}", occupancy(3072, 4))
    })?;
    for m in 1..=65536usize {
        // independent occupancy: work items over whole 4096-item waves
        let occ = |nt: usize| {
            let items = (m * nt) as f64;
            let waves = ((m * nt) as f64 / 4096.0).ceil();
            items / (waves * 4096.0)
        };
        let mut best = NT_CHOICES[0];
        for &nt in &NT_CHOICES[1..] {
            if occ(nt) > occ(best) {
                best = nt;
            }
        }
        check(select_nt(m) == best, || {
            format!("select_nt({m}) = {}, brute force {best}", select_nt(m))
        })?;
    }
    within(Duration::from_secs(5), start.elapsed())?;
    Ok(format!(
        "select_nt(1024)=4, occupancy(3072,4)=1, brute force over [1,65536] in {:.2?}",
        start.elapsed()
    ))
}

fn tail_cases() -> Outcome {
    let mut count = 0;
    let shapes = [(1000, 0.7), (999, 0.8), (77, 0.7), (64, 0.9), (1023, 0.9)];
    for (i, &(k, sparsity)) in shapes.iter().enumerate() {
        for n in kernels::FAST_PATH_N {
            let case = BenchmarkCase::new(96, k, n, sparsity, 11 + i as u64).unwrap();
            for vlc in VLC_CHOICES {
                for nt in NT_CHOICES {
                    oracle_equivalence(&case, &KernelConfig::new(vlc, nt).unwrap())?;
                    count += 1;
                }
            }
        }
    }
    let case = BenchmarkCase::new(256, 1000, 128, 0.7, 5).unwrap();
    let nnzr = case.nnz_per_row();
    check(!nnzr.is_multiple_of(32 * 4), || {
        format!("nnzr={nnzr} is a multiple of vlc*nt")
    })?;
    oracle_equivalence(&case, &KernelConfig::new(32, 4).unwrap())?;
    Ok(format!(
        "{} vlc/nt/shape combinations incl. K=1000 nnzr={nnzr} vlc=32 nt=4",
        count + 1
    ))
}

fn grid_methodology() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("grid.csv");
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_sparsemm"))
        .args([
            "grid",
            "--ops",
            "sddmm,spmm,fusedmm",
            "--scale-div",
            "8",
            "--out",
        ])
        .arg(&path)
        .env_remove("SPARSEMM_WORKERS")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(out.status.success(), || {
        format!("grid exited with {}", out.status)
    })?;
    within(Duration::from_secs(600), elapsed)?;

    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let header = text.lines().next().unwrap_or_default();
    check(header.starts_with(&CSV_HEADER.join(",")), || {
        format!("header {header}")
    })?;
    let rows = read_grid_csv(text.as_bytes()).map_err(|e| e.to_string())?;
    check(rows.len() == 216, || format!("{} data rows", rows.len()))?;
    for op in Operation::ALL {
        let n = rows.iter().filter(|r| r.op == op).count();
        check(n == 72, || format!("{n} rows for {op}"))?;
    }
    for r in &rows {
        check(r.status == "ok", || {
            format!("{} {}x{}: {}", r.op, r.m, r.k, r.status)
        })?;
        check(r.iters == Some(20), || format!("iters {:?}", r.iters))?;
        check(r.min_time_s.is_some_and(|t| t > 0.0), || {
            "missing timing".into()
        })?;
    }

    // the timed samples exclude the warm-up and the reported time is their minimum
    let case = BenchmarkCase::seeded(128, 128, 32, 0.7).unwrap();
    let r = bench::time_kernel(
        Operation::Sddmm,
        Implementation::Vectorized,
        &case,
        &KernelConfig::default(),
        20,
    )
    .map_err(|e| e.to_string())?;
    let min = r.all_times_s.iter().copied().fold(f64::INFINITY, f64::min);
    check(r.all_times_s.len() == 20 && r.min_time_s == min, || {
        "min-of-20 timing".into()
    })?;

    Ok(format!(
        "216 rows, 72 cases x 3 ops, iters=20, in {elapsed:.1?}"
    ))
}

fn ai_bounds() -> Outcome {
    let (m, k, n) = (8192u64, 8192u64, 128u64);
    let case = BenchmarkCase::seeded(8192, 8192, 128, 0.7).unwrap();
    let nnz = case.nnz() as u64;
    check(nnz == 8192 * 2458, || format!("nnz {nnz}"))?;
    let (worst, best) = arithmetic_intensity_bounds(m, k, n, nnz);

    // flops over bytes: 4-byte B row plus index and value per nonzero, and
    // each array touched once
    let flops = (2 * nnz * n) as f64;
    let expect_worst = flops / (4 * n * nnz + 8 * nnz) as f64;
    let expect_best = flops / (4 * (m * n + k * n + 2 * nnz + m + 1)) as f64;
    check((worst - expect_worst).abs() < 1e-12, || {
        format!("ai_worst {worst} vs {expect_worst}")
    })?;
    check((best - expect_best).abs() < 1e-9, || {
        format!("ai_best {best} vs {expect_best}")
    })?;
    check((0.45..=0.50).contains(&worst), || {
        format!("ai_worst {worst} outside [0.45, 0.50]")
    })?;
    check((30.0..=60.0).contains(&best), || {
        format!("ai_best {best} outside [30, 60]")
    })?;
    Ok(format!("ai_worst={worst:.4} ai_best={best:.2}"))
}

fn spmm_performance() -> Outcome {
    let case = BenchmarkCase::seeded(4096, 4096, 128, 0.7).unwrap();
    let inputs = case.inputs().map_err(|e| e.to_string())?;
    let cfg = KernelConfig::default().with_workers(max_workers());
    let time = |implementation| {
        bench::time_on_inputs(Operation::Spmm, implementation, &case, &inputs, &cfg, 20)
            .map(|r| r.min_time_s)
            .map_err(|e| e.to_string())
    };
    let vectorized = time(Implementation::Vectorized)?;
    let reference = time(Implementation::Reference)?;
    let msg = format!(
        "vectorized {vectorized:.4}s vs reference {reference:.4}s ({:.2}x) with {} workers",
        reference / vectorized,
        max_workers()
    );
    check(vectorized <= reference, || msg.clone())?;
    Ok(msg)
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("1 CSR golden example", fig1),
        ("2 oracle equivalence", oracle_cases),
        ("3 fusion equivalence", fusion_equivalence),
        ("4 determinism", determinism),
        ("5 NT selection", nt_selection),
        ("6 tail correctness", tail_cases),
        ("7 grid methodology", grid_methodology),
        ("8 arithmetic intensity", ai_bounds),
        ("9 SpMM performance", spmm_performance),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match &outcome {
            Ok(detail) => format!("criterion {name}: PASS ({detail})"),
            Err(detail) => format!("criterion {name}: FAIL ({detail})"),
        };
        let mut stdout = std::io::stdout().lock();
        writeln!(stdout, "{line}").unwrap();
        stdout.flush().unwrap();
        if outcome.is_err() {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

//! File interchange for matrices.
//!
//! - Matrix Market coordinate files (`%%MatrixMarket matrix coordinate real general`,
//!   1-based indices) for [`CsrMatrix`].
//! - A raw little-endian dump of the CSR arrays: `rows`, `cols`, `nnz` as `u64`,
//!   then `row_ptr` and `col_idx` as `u64`, then `values` as `f32`.
//! - A raw little-endian dump of a [`DenseMatrix`]: `rows`, `cols` as `u64`
//!   followed by the row-major `f32` data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::csr::{build_csr, CsrMatrix, Triplet};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

pub fn write_matrix_market<W: Write>(a: &CsrMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{MM_HEADER}")?;
    writeln!(w, "{} {} {}", a.rows(), a.cols(), a.nnz())?;
    for i in 0..a.rows() {
        for p in a.row_range(i) {
            writeln!(w, "{} {} {}", i + 1, a.col_idx()[p] + 1, a.values()[p])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a coordinate Matrix Market file. `real`, `integer` and `pattern`
/// fields are accepted (pattern entries get the value 1); only `general`
/// symmetry is supported.
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<CsrMatrix> {
    let mut lines = r.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "expected a %%MatrixMarket matrix header"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(1, "only the coordinate format is supported"));
    }
    let pattern = match tokens[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(parse_err(1, format!("unsupported field type {other}"))),
    };
    if tokens[4] != "general" {
        return Err(parse_err(1, "only general symmetry is supported"));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(line_no, "expected 'rows cols nnz'"));
                }
                let rows = parse_num(fields[0], line_no)?;
                let cols = parse_num(fields[1], line_no)?;
                let nnz = parse_num(fields[2], line_no)?;
                triplets.reserve(nnz);
                size = Some((rows, cols, nnz));
            }
            Some((rows, cols, _)) => {
                let expected = if pattern { 2 } else { 3 };
                if fields.len() != expected {
                    return Err(parse_err(line_no, format!("expected {expected} fields")));
                }
                let i: usize = parse_num(fields[0], line_no)?;
                let j: usize = parse_num(fields[1], line_no)?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_err(line_no, format!("index ({i}, {j}) out of range")));
                }
                let value = if pattern {
                    1.0
                } else {
                    fields[2]
                        .parse::<f32>()
                        .map_err(|e| parse_err(line_no, e.to_string()))?
                };
                triplets.push(Triplet::new(i - 1, j - 1, value));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if triplets.len() != nnz {
        return Err(parse_err(
            1,
            format!("size line declares {nnz} entries, found {}", triplets.len()),
        ));
    }
    build_csr(&triplets, rows, cols)
}

pub fn write_csr_binary<W: Write>(a: &CsrMatrix, mut w: W) -> Result<()> {
    for v in [a.rows(), a.cols(), a.nnz()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for &p in a.row_ptr() {
        w.write_all(&(p as u64).to_le_bytes())?;
    }
    for &c in a.col_idx() {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    for &v in a.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a raw CSR dump and validates it.
pub fn read_csr_binary<R: Read>(mut r: R) -> Result<CsrMatrix> {
    let rows = read_len(&mut r)?;
    let cols = read_len(&mut r)?;
    let nnz = read_len(&mut r)?;
    let row_ptr = read_u64s(&mut r, rows + 1)?;
    let col_idx = read_u64s(&mut r, nnz)?;
    let values = read_f32s(&mut r, nnz)?;
    expect_eof(&mut r)?;
    CsrMatrix::try_from_parts(rows, cols, row_ptr, col_idx, values)
}

pub fn write_dense_binary<W: Write>(d: &DenseMatrix, mut w: W) -> Result<()> {
    w.write_all(&(d.rows() as u64).to_le_bytes())?;
    w.write_all(&(d.cols() as u64).to_le_bytes())?;
    for &v in d.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dense_binary<R: Read>(mut r: R) -> Result<DenseMatrix> {
    let rows = read_len(&mut r)?;
    let cols = read_len(&mut r)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format(format!("{rows}x{cols} overflows")))?;
    let data = read_f32s(&mut r, len)?;
    expect_eof(&mut r)?;
    DenseMatrix::from_vec(rows, cols, data)
}

pub fn save_matrix_market(a: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_market(a, BufWriter::new(File::create(path)?))
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    read_matrix_market(BufReader::new(File::open(path)?))
}

pub fn save_csr_binary(a: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_csr_binary(a, BufWriter::new(File::create(path)?))
}

pub fn load_csr_binary(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    read_csr_binary(BufReader::new(File::open(path)?))
}

pub fn save_dense_binary(d: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_dense_binary(d, BufWriter::new(File::create(path)?))
}

pub fn load_dense_binary(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_dense_binary(BufReader::new(File::open(path)?))
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num(s: &str, line: usize) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(line, format!("'{s}' is not a non-negative integer")))
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    usize::try_from(u64::from_le_bytes(buf))
        .map_err(|_| Error::Format("length does not fit in usize".into()))
}

fn read_u64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf).map_err(truncated)?;
        let v = usize::try_from(u64::from_le_bytes(buf))
            .map_err(|_| Error::Format("index does not fit in usize".into()))?;
        out.push(v);
    }
    Ok(out)
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 4];
    for _ in 0..n {
        r.read_exact(&mut buf).map_err(truncated)?;
        out.push(f32::from_le_bytes(buf));
    }
    Ok(out)
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut byte = [0u8; 1];
    match r.read(&mut byte)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after matrix data".into())),
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

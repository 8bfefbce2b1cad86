//! Sparse kernels over CSR storage: sampled dense-dense products (SDDMM),
//! sparse-dense products (SpMM) and their fusion (FusedMM), together with
//! dense oracles, synthetic workloads and a benchmark harness.
//!
//! ```
//! use sparsemm::kernels::{fusedmm, sddmm, spmm, KernelConfig};
//! use sparsemm::workload::BenchmarkCase;
//!
//! let case = BenchmarkCase::new(64, 64, 32, 0.7, 1).unwrap();
//! let inputs = case.inputs().unwrap();
//! let cfg = KernelConfig::default();
//!
//! let sampled = sddmm(&inputs.pattern, &inputs.c, &inputs.b, &cfg).unwrap();
//! assert_eq!(sampled.len(), inputs.pattern.nnz());
//! let e = fusedmm(&inputs.pattern, &inputs.c, &inputs.b, &inputs.d, &cfg).unwrap();
//! let a = inputs.pattern.with_values(sampled).unwrap();
//! assert_eq!(spmm(&a, &inputs.d, &cfg).unwrap().shape(), e.shape());
//! ```

pub mod bench;
pub mod cli;
pub mod csr;
pub mod dense;
pub mod error;
pub mod io;
pub mod kernels;
pub mod oracle;
pub mod workload;

pub use csr::{CsrMatrix, Triplet};
pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use kernels::KernelConfig;

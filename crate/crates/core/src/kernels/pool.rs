//! Worker pools, cached per thread count so repeated kernel calls do not pay
//! for thread start-up.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use rayon::{ThreadPool, ThreadPoolBuilder};

static POOLS: Lazy<Mutex<HashMap<usize, Arc<ThreadPool>>>> = Lazy::new(Default::default);

/// Runs `f` on a pool of exactly `workers` threads.
pub(crate) fn install<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = {
        let mut pools = POOLS.lock().unwrap_or_else(|e| e.into_inner());
        pools
            .entry(workers)
            .or_insert_with(|| {
                Arc::new(
                    ThreadPoolBuilder::new()
                        .num_threads(workers)
                        .thread_name(move |i| format!("sparsemm-{workers}-{i}"))
                        .build()
                        .expect("failed to start worker pool"),
                )
            })
            .clone()
    };
    pool.install(f)
}

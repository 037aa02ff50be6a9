//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (on by default) work items are spread over the
//! rayon pool; without it they run in order on the calling thread. Results are
//! always returned in input order, so every reduction done afterwards is
//! deterministic regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Map `f` over `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Run `f` with all data-parallel maps confined to the current thread.
///
/// Used by the benchmarks to compare against the pooled path inside one
/// binary. Without the `parallel` feature this just calls `f`.
#[cfg(feature = "parallel")]
pub fn sequential<R: Send, F: FnOnce() -> R + Send>(f: F) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("single-thread pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn sequential<R: Send, F: FnOnce() -> R + Send>(f: F) -> R {
    f()
}

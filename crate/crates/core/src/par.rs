//! Patch-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a dedicated
//! rayon pool of the requested size; without it, or with one thread, items
//! are processed in order on the calling thread. Results are always returned
//! in input order.

/// Maps `f` over `items` using up to `threads` workers, preserving order.
pub fn map_ordered<I, O, F>(items: &[I], threads: usize, f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if threads > 1 && items.len() > 1 {
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
            Err(e) => log::warn!("falling back to sequential execution: {e}"),
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    items.iter().map(f).collect()
}

/// Whether multi-threaded execution is compiled in.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

//! Data-parallel helpers.
//!
//! With the `parallel` feature the maps below run on the rayon pool; without
//! it, or after [`set_enabled(false)`](set_enabled), they run sequentially.
//! Work is always partitioned the same way and partial results are combined
//! in index order, so both paths produce bit-identical numbers.

use std::sync::atomic::{AtomicBool, Ordering};

static ENABLED: AtomicBool = AtomicBool::new(true);

/// Toggles parallel execution at runtime. Has no effect without the
/// `parallel` feature.
pub fn set_enabled(enabled: bool) {
    ENABLED.store(enabled, Ordering::Relaxed);
}

pub fn is_enabled() -> bool {
    cfg!(feature = "parallel") && ENABLED.load(Ordering::Relaxed)
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_enabled() && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Maps `f` over fixed-size chunks of `rows` rows. The chunk layout depends
/// only on `rows` and `chunk`, never on the thread count.
pub fn map_row_chunks<T, F>(rows: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = rows.div_ceil(chunk);
    map_range(n_chunks, |c| {
        let start = c * chunk;
        f(start..(start + chunk).min(rows))
    })
}

//! Ordered fan-out over a fixed-size worker pool.

use rayon::prelude::*;

/// Applies `f` to `0..n` on `workers` threads and returns the results in
/// index order. With one worker (or on targets without threads) the map
/// runs inline on the caller's thread.
pub fn ordered_map<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

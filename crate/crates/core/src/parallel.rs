//! Ordered parallel maps over replicate indices.
//!
//! Results land in an indexed buffer so every reduction downstream runs in
//! index order; the outcome is identical for any number of worker threads.

use rayon::prelude::*;

use crate::error::Result;

/// Evaluate `f(i)` for `i in 0..n` in parallel, returned in index order.
pub fn ordered_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Fallible variant; the first error in index order is returned.
pub fn try_ordered_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let out: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    out.into_iter().collect()
}

/// Parallel map over a slice, results in slice order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    items.par_iter().map(f).collect()
}

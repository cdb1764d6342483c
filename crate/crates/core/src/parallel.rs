//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) work fans out over rayon; without it
//! every helper runs sequentially. Reductions split at fixed midpoints so the
//! floating-point result is identical for any worker count.

use std::ops::Range;

/// Leaf size used by [`pairwise_reduce`] callers that have no better choice.
pub const DEFAULT_LEAF: usize = 32;

/// `(0..n).map(f)` with results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible [`map_indexed`]; reports the error with the lowest index.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}

/// Tree reduction over `range` with split points fixed by the range alone.
pub fn pairwise_reduce<T, L, C>(range: Range<usize>, leaf_size: usize, leaf: &L, combine: &C) -> T
where
    T: Send,
    L: Fn(Range<usize>) -> T + Sync,
    C: Fn(T, T) -> T + Sync,
{
    let len = range.end - range.start;
    if len <= leaf_size.max(1) {
        return leaf(range);
    }
    let mid = range.start + len / 2;
    let (left, right) = join(
        || pairwise_reduce(range.start..mid, leaf_size, leaf, combine),
        || pairwise_reduce(mid..range.end, leaf_size, leaf, combine),
    );
    combine(left, right)
}

/// Pairwise sum of a slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    fn go(v: &[f64]) -> f64 {
        if v.len() <= 8 {
            return v.iter().sum();
        }
        let (a, b) = v.split_at(v.len() / 2);
        go(a) + go(b)
    }
    go(values)
}

fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (a(), b())
    }
}

/// Runs `f` on a pool capped at `workers` threads (`None` uses the global pool).
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = workers {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

//! Deterministic map-reduce over index ranges, parallel when the `parallel`
//! feature is enabled.
//!
//! Work is split into fixed-size chunks; each chunk is folded sequentially
//! in index order and the chunk results are combined in chunk order. That
//! makes the floating-point result *bit-identical* regardless of thread
//! count — the parallel and sequential paths perform the same additions in
//! the same order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions. Large enough that the
/// per-chunk overhead vanishes, small enough to load-balance well.
pub(crate) const CHUNK: usize = 1024;

/// Fold `0..n` chunk-by-chunk and combine chunk results in order.
///
/// `fold_chunk` receives a chunk's index range and must process it in
/// ascending order; `merge` combines accumulated results left-to-right.
pub(crate) fn chunked_fold<A, F, M>(n: usize, fold_chunk: F, merge: M, identity: impl Fn() -> A) -> A
where
    A: Send,
    F: Fn(std::ops::Range<usize>) -> A + Sync,
    M: Fn(A, A) -> A,
{
    let ranges: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(CHUNK)
        .map(|lo| lo..(lo + CHUNK).min(n))
        .collect();

    let partials = map_ordered(&ranges, |r| fold_chunk(r.clone()));

    partials.into_iter().fold(identity(), merge)
}

/// Map a slice to a vector, preserving order; parallel when enabled.
pub(crate) fn map_ordered<T, A, F>(items: &[T], f: F) -> Vec<A>
where
    T: Sync,
    A: Send,
    F: Fn(&T) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Strictly sequential twin of [`chunked_fold`], kept available in every
/// build so benchmarks can compare the two paths directly.
pub(crate) fn chunked_fold_seq<A, F, M>(
    n: usize,
    fold_chunk: F,
    merge: M,
    identity: impl Fn() -> A,
) -> A
where
    F: Fn(std::ops::Range<usize>) -> A,
    M: Fn(A, A) -> A,
{
    let mut acc = identity();
    let mut lo = 0usize;
    while lo < n {
        let hi = (lo + CHUNK).min(n);
        acc = merge(acc, fold_chunk(lo..hi));
        lo = hi;
    }
    acc
}

//! Data-parallel loop helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run sequentially. [`set_force_sequential`] flips the rayon build into
//! the sequential path at runtime so benchmarks can compare both without
//! recompiling.
//!
//! Gradient reductions stay deterministic: partial results are produced per
//! chunk and folded in chunk order, never via an unordered reduce.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential code path even when compiled with rayon.
pub fn set_force_sequential(force: bool) {
    FORCE_SEQUENTIAL.store(force, Ordering::SeqCst);
}

pub fn force_sequential() -> bool {
    FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Runs `f` over equal-length chunks of `data` (the last may be shorter),
/// passing the chunk index and mutable chunk slice.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    if !force_sequential() {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        f(i, c);
    }
}

/// Order-preserving parallel map over an index range.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !force_sequential() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Splits `0..n` into at most `max_chunks` contiguous ranges, maps each range
/// with `f` (possibly in parallel), then folds the results **in range order**
/// with `fold`. Floating-point accumulation order is therefore fixed and the
/// result is reproducible run to run regardless of thread scheduling.
pub fn reduce_ranges<R, F, G>(n: usize, max_chunks: usize, f: F, mut fold: G) -> Option<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
    G: FnMut(R, R) -> R,
{
    if n == 0 {
        return None;
    }
    let chunks = max_chunks.clamp(1, n);
    let chunk_len = n.div_ceil(chunks);
    let ranges: Vec<_> = (0..n)
        .step_by(chunk_len)
        .map(|start| start..(start + chunk_len).min(n))
        .collect();
    let parts = {
        #[cfg(feature = "parallel")]
        {
            if !force_sequential() {
                ranges.into_par_iter().map(&f).collect::<Vec<_>>()
            } else {
                ranges.into_iter().map(&f).collect::<Vec<_>>()
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            ranges.into_iter().map(&f).collect::<Vec<_>>()
        }
    };
    let mut it = parts.into_iter();
    let first = it.next()?;
    Some(it.fold(first, |acc, p| fold(acc, p)))
}

/// Default chunk count for deterministic gradient reductions.
pub const GRAD_CHUNKS: usize = 16;

//! Thin parallel-iteration helpers.
//!
//! With the `parallel` feature these dispatch to rayon; without it they run
//! the same closures in order on the calling thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of worker threads the parallel paths will use.
pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Runs `f(chunk_index, chunk)` over `chunk_len`-sized pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
}

/// Order-preserving map.
pub fn map<I, R, F>(items: &[I], f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Send + Sync,
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

/// Order-preserving map with per-worker state built by `init`.
pub fn map_init<I, S, R, INIT, F>(items: &[I], init: INIT, f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    INIT: Fn() -> S + Send + Sync,
    F: Fn(&mut S, &I) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map_init(init, f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut state = init();
        items.iter().map(|i| f(&mut state, i)).collect()
    }
}

/// Splits `rows` output rows into bands so that each worker gets a few.
pub(crate) fn rows_per_band(rows: usize) -> usize {
    let bands = (num_threads() * 4).max(1);
    rows.div_ceil(bands).max(1)
}

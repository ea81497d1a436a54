//! Data-parallel helpers with a runtime switch to sequential execution.
//!
//! With the `parallel` feature the helpers run on the rayon pool unless
//! [`set_parallel(false)`](set_parallel) was called; without it they always
//! run sequentially. Output order never depends on the mode.

use std::sync::atomic::{AtomicBool, Ordering};

static ENABLED: AtomicBool = AtomicBool::new(true);

/// Turns data parallelism on or off for the whole process, including the
/// dense linear algebra.
pub fn set_parallel(on: bool) {
    ENABLED.store(on, Ordering::Relaxed);
    faer::set_global_parallelism(faer_par_for(on));
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && ENABLED.load(Ordering::Relaxed)
}

#[cfg(feature = "parallel")]
fn faer_par_for(on: bool) -> faer::Par {
    if on {
        faer::Par::rayon(0)
    } else {
        faer::Par::Seq
    }
}

#[cfg(not(feature = "parallel"))]
fn faer_par_for(_on: bool) -> faer::Par {
    faer::Par::Seq
}

/// Caps the worker count of the global pool. Only the first call before any
/// parallel work takes effect; later calls are ignored.
pub fn set_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if n <= 1 {
        set_parallel(false);
    }
}

/// `f(0), …, f(n-1)` in order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// `f` applied to every element, in order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Fills `out` chunk by chunk; `f(chunk_index, chunk)`.
pub fn for_each_chunk_mut<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature enabled, [`par_map`] fans independent work items
//! (whole state solves, ensemble samples, time slices) out over the rayon pool.
//! Every item is computed by a single thread and results are collected in input
//! order, so outputs do not depend on the thread count. Without the feature,
//! or after [`set_execution`] with [`Execution::Sequential`], the same closures
//! run in a plain loop.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(cfg!(feature = "parallel"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

/// Selects the execution mode for subsequent [`par_map`] calls process-wide.
/// `Parallel` is a no-op request when the crate is built without `parallel`.
pub fn set_execution(mode: Execution) {
    PARALLEL.store(
        mode == Execution::Parallel && cfg!(feature = "parallel"),
        Ordering::SeqCst,
    );
}

pub fn execution() -> Execution {
    if PARALLEL.load(Ordering::SeqCst) {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Order-preserving map over independent items.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if PARALLEL.load(Ordering::Relaxed) && items.len() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn par_map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if PARALLEL.load(Ordering::Relaxed) && n > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

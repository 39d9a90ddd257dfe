//! Replica-parallel execution.
//!
//! With the `parallel` feature (on by default) replica loops run on the rayon
//! pool; without it, or after `set_execution(Execution::Sequential)`, they run
//! in index order on the calling thread. Output order is always replica order,
//! so reductions over the returned vectors are bit-identical in both modes.

use std::sync::atomic::{AtomicBool, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

pub fn set_execution(mode: Execution) {
    SEQUENTIAL.store(mode == Execution::Sequential, Ordering::Relaxed);
}

/// Effective mode; always `Sequential` when built without `parallel`.
pub fn execution() -> Execution {
    if cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::Relaxed) {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Configure the global worker pool. Only the first call has any effect.
pub fn set_workers(workers: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
}

/// `(0..n).map(f)` with per-worker scratch state created by `init`.
pub fn map_init<T, S, I, F>(n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution() == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n)
            .into_par_iter()
            .with_min_len(16)
            .map_init(&init, |s, i| f(s, i))
            .collect();
    }
    let mut state = init();
    (0..n).map(|i| f(&mut state, i)).collect()
}

pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_init(n, || (), |_, i| f(i))
}

/// Fallible variant of [`map`]; returns the first error in index order.
pub fn try_map<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map(n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        set_execution(Execution::Sequential);
        let a = map(1000, f);
        set_execution(Execution::Parallel);
        let b = map(1000, f);
        assert_eq!(a, b);
    }
}

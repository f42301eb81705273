//! Switch between rayon-backed and plain sequential execution.
//!
//! `Execution::Parallel` silently degrades to sequential iteration when the
//! crate is built without the `parallel` feature, so every caller produces
//! the same values under either build.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually run work concurrently.
    pub fn is_concurrent(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..count`, returning results in index order.
pub fn map_indexed<T, F>(exec: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_concurrent() {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..count).map(f).collect()
}

/// Consumes `items`, mapping each with its index; results in index order.
pub fn map_owned<T, U, F>(exec: Execution, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(usize, T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_concurrent() {
        use rayon::prelude::*;
        return items.into_par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = exec;
    items.into_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Maps `f` over `0..count` and returns `(index, result)` pairs in the order
/// the work items finished. Sequential execution finishes in index order.
pub fn map_completion_order<T, F>(exec: Execution, count: usize, f: F) -> Vec<(usize, T)>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let done = Mutex::new(Vec::with_capacity(count));
    let finish = |i: usize| {
        let value = f(i);
        done.lock().expect("completion log poisoned").push((i, value));
    };
    #[cfg(feature = "parallel")]
    if exec.is_concurrent() {
        use rayon::prelude::*;
        (0..count).into_par_iter().for_each(finish);
        return done.into_inner().expect("completion log poisoned");
    }
    let _ = exec;
    (0..count).for_each(finish);
    done.into_inner().expect("completion log poisoned")
}

/// Runs `op` on a dedicated pool of `threads` workers when concurrency is
/// available, otherwise directly on the calling thread.
pub fn with_threads<R, F>(exec: Execution, threads: usize, op: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_concurrent() && threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::error::Error::ThreadPool(e.to_string()))?;
        return Ok(pool.install(op));
    }
    let _ = (exec, threads);
    Ok(op())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexed_map_keeps_order() {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let v = map_indexed(exec, 100, |i| i * i);
            assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn completion_order_is_a_permutation() {
        let mut v = map_completion_order(Execution::Parallel, 64, |i| i + 1);
        v.sort();
        assert_eq!(v, (0..64).map(|i| (i, i + 1)).collect::<Vec<_>>());
        let seq = map_completion_order(Execution::Sequential, 5, |i| i);
        assert_eq!(seq, vec![(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]);
    }
}

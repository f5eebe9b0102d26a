//! Sequential / rayon execution switch.
//!
//! Every data-parallel loop in the crate maps an index range through
//! [`Execution::map`], which always gathers results in index order. Parallel and
//! sequential runs therefore produce bit-identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the current rayon pool. Falls back to sequential when the crate is
    /// built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `0..n` through `f`, returning results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Like [`map`](Self::map) but short-circuits on the first error in index
    /// order.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

/// Runs `f` inside a dedicated rayon pool with `threads` workers.
///
/// Without the `parallel` feature the thread count is ignored.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => return pool.install(f),
            Err(e) => log::warn!("could not build a {n}-thread pool ({e}); using the global pool"),
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let v = exec.map(100, |i| i * i);
            assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn try_map_reports_first_error() {
        let r: Result<Vec<usize>, usize> =
            Execution::Parallel.try_map(10, |i| if i >= 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }
}

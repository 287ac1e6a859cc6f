//! Data-parallel execution with a sequential fallback.
//!
//! Every batch entry point takes an [`Exec`]. With the `parallel` feature
//! enabled, [`Exec::Parallel`] fans work out over rayon; without it the
//! same call runs sequentially. Results always come back in input order, so
//! output never depends on the mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Map `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Like [`Exec::map`] but caps the number of concurrently running calls.
    /// Used for network-bound work where the in-flight count matters.
    pub fn map_bounded<T, R, F>(self, items: &[T], max_in_flight: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && max_in_flight > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(max_in_flight).build() {
                return pool.install(|| items.par_iter().map(&f).collect());
            }
        }
        #[cfg(not(feature = "parallel"))]
        let _ = max_in_flight;
        items.iter().map(f).collect()
    }
}

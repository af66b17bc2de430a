//! Execution strategy for the data-parallel loops (per-curve flows, per-ray probes).
//!
//! With the `parallel` feature (default) `Execution::Parallel` fans out on the
//! rayon pool; without it every strategy runs sequentially. Results are always
//! returned in input order so reductions stay deterministic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work concurrently.
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Map `f` over `items`, preserving order.
pub fn map_ordered<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
        _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

/// Mutate every element in place.
pub fn for_each_mut<T, F>(exec: Execution, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        }
        _ => items.iter_mut().enumerate().for_each(|(i, t)| f(i, t)),
    }
}

/// Size the global pool. A cap of one thread selects the sequential path.
/// Only the first call has an effect on the pool.
pub fn configure_threads(threads: Option<usize>) -> Execution {
    match threads {
        Some(0) | Some(1) => Execution::Sequential,
        Some(_t) => {
            #[cfg(feature = "parallel")]
            {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(_t).build_global();
            }
            Execution::Parallel
        }
        None => Execution::Parallel,
    }
}

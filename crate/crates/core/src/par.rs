//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the parallel path runs on the
//! rayon global pool. Without it, [`Execution::Parallel`] quietly runs
//! sequentially so callers never need their own `cfg` switches.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Order-preserving map.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Folds fixed-size chunks independently and merges the partial results.
    pub fn fold_chunks<T, A, F, M>(self, items: &[T], chunk: usize, init: fn() -> A, fold: F, merge: M) -> A
    where
        T: Sync,
        A: Send,
        F: Fn(A, &T) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items
                    .par_chunks(chunk.max(1))
                    .map(|c| c.iter().fold(init(), &fold))
                    .reduce(init, merge)
            }
            _ => {
                let _ = (chunk, &merge);
                items.iter().fold(init(), fold)
            }
        }
    }
}

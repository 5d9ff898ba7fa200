//! Bounded worker pools. Results always come back in input order, so the
//! output of any job count is identical to the sequential run.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Map `f` over `items` on at most `jobs` threads, preserving order.
/// `jobs <= 1` runs on the calling thread.
pub fn par_map<T, U, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

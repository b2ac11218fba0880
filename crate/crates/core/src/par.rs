//! Row-parallel evaluation with order-preserving collection.
//!
//! Results are always collected in row order so every downstream reduction
//! runs sequentially over the same sequence, whatever the thread count.

use crate::error::Result;

pub(crate) fn map_rows<T, F>(n: usize, concurrent: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if concurrent && n > 64 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = concurrent;
    (0..n).map(f).collect()
}

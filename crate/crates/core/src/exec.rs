//! Execution helper for the data-parallel inner loops (Monte Carlo counting,
//! per-layer DP sweeps). With the `parallel` feature the map runs on rayon;
//! without it, sequentially. Both paths yield identical results: slots are
//! computed independently and collected in index order, so output never
//! depends on the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

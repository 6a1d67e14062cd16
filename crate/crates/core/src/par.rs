//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) independent work items are spread
//! over rayon's pool; without it, or with [`ExecMode::Serial`], they run in
//! order on the calling thread. Results are always collected in input order,
//! so outputs are identical in both modes.

/// Selects how independent work items are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Serial,
    Parallel,
}

impl ExecMode {
    /// Parallel when the crate was built with rayon and `workers > 1`.
    pub fn from_workers(workers: usize) -> Self {
        if workers > 1 && cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Serial
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Fills consecutive `chunk`-sized slices of `out`, one call per row.
pub fn for_each_row<F>(mode: ExecMode, out: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
        }
        _ => out
            .chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, row)| f(i, row)),
    }
}

/// Runs `f` inside a pool of `workers` threads when parallel execution is
/// available; otherwise runs it directly.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce(ExecMode) -> R + Send) -> R {
    let mode = ExecMode::from_workers(workers);
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(|| f(mode));
        }
    }
    f(mode)
}

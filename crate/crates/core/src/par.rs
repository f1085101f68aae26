//! Data-parallel helpers. With the `parallel` feature (on by default) work is
//! spread over the rayon pool; without it, or with [`Exec::Sequential`], the
//! same closures run in order on the calling thread.

/// Execution strategy for batch operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Like [`map`] but consumes the input.
pub fn map_owned<T, R, F>(exec: Exec, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}

/// Splits `items` into chunks of at least `chunk` items, folds each chunk
/// with `fold`, then merges the partial results with `merge`. Chunks grow so
/// that each pool thread gets a handful of them.
pub fn fold_chunks<T, A, F, M>(exec: Exec, items: &[T], chunk: usize, init: impl Fn() -> A + Sync + Send, fold: F, merge: M) -> A
where
    T: Sync,
    A: Send,
    F: Fn(A, &T) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        let chunk = chunk.max(items.len().div_ceil(4 * rayon::current_num_threads()));
        return items
            .par_chunks(chunk)
            .map(|c| c.iter().fold(init(), &fold))
            .reduce(&init, &merge);
    }
    let _ = (exec, chunk, &merge);
    items.iter().fold(init(), fold)
}

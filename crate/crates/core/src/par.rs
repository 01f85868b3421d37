//! Data-parallel helpers. With the `parallel` feature the work runs on the
//! rayon pool; without it every call runs sequentially. Results always come
//! back in index order.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether `Parallel` actually fans out in this build.
    pub const fn available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map_range<T, F>(n: usize, par: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match par {
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

pub fn map_slice<S, T, F>(items: &[S], par: Parallelism, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_range(items.len(), par, |k| f(&items[k]))
}

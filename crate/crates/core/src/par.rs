//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`map_indexed`] fans out over the
//! rayon pool; without it the same call runs sequentially. Output order is
//! index order either way, so results are identical across both modes.
//! Only read-only passes (evaluation, snapshots) go through here; the
//! training loop itself is sequential.

/// Map `f` over `0..count`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

/// Map `f` over `0..count`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

/// Always-sequential variant, kept for benchmarking against [`map_indexed`].
pub fn map_indexed_seq<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let par = map_indexed(257, |i| i * i);
        let seq = map_indexed_seq(257, |i| i * i);
        assert_eq!(par, seq);
    }
}

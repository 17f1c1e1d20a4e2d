//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature disabled every mode runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// `f` applied to `0..n`, results in index order.
pub fn map_indices<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// `f` applied to every item, results in input order.
pub fn map_slice<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_indices(mode, items.len(), |i| f(&items[i]))
}

/// Lowest index in `0..n` for which `f` returns `Some`, with its value.
/// The answer does not depend on the mode or on thread scheduling.
pub fn find_first<R, F>(mode: ExecMode, n: u128, f: F) -> Option<(u128, R)>
where
    R: Send,
    F: Fn(u128) -> Option<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        // chunks keep the index range within u64 and bound wasted work
        const CHUNK: u128 = 1 << 16;
        let mut start = 0u128;
        while start < n {
            let len = (n - start).min(CHUNK) as u64;
            let hit = (0..len).into_par_iter().find_map_first(|i| {
                let idx = start + i as u128;
                f(idx).map(|r| (idx, r))
            });
            if hit.is_some() {
                return hit;
            }
            start += CHUNK;
        }
        return None;
    }
    let _ = mode;
    let mut i = 0u128;
    while i < n {
        if let Some(r) = f(i) {
            return Some((i, r));
        }
        i += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        for mode in [ExecMode::Sequential, ExecMode::Parallel] {
            assert_eq!(map_indices(mode, 5, |i| i * i), vec![0, 1, 4, 9, 16]);
            let hit = find_first(mode, 200_000, |i| (i % 70_001 == 70_000).then_some(i * 2));
            assert_eq!(hit, Some((70_000, 140_000)));
            assert_eq!(find_first(mode, 10, |_| None::<u8>), None);
        }
    }
}

//! Switch between rayon data-parallel loops and sequential fallbacks.
//!
//! The `parallel` cargo feature decides whether rayon is compiled in at all;
//! [`set_parallel`] toggles it at runtime (used by the benchmarks to compare
//! both paths in one binary). Every parallel loop in this crate reduces in a
//! fixed order or over order-independent values (integer sums, per-index
//! slots), so enabling parallelism never changes emitted bytes.

#[cfg(feature = "parallel")]
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
static PARALLEL_ENABLED: AtomicBool = AtomicBool::new(true);

/// Returns true when rayon execution is compiled in and currently enabled.
#[inline]
pub fn parallel_enabled() -> bool {
    #[cfg(feature = "parallel")]
    {
        PARALLEL_ENABLED.load(Ordering::Relaxed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Enables or disables rayon execution at runtime. A no-op when the
/// `parallel` feature is off.
pub fn set_parallel(enabled: bool) {
    #[cfg(feature = "parallel")]
    PARALLEL_ENABLED.store(enabled, Ordering::Relaxed);
    #[cfg(not(feature = "parallel"))]
    let _ = enabled;
}

/// Maps `f` over `0..n` and collects results in index order.
pub fn map_indexed<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Sums an integer count produced per index; integer addition commutes, so
/// the result is independent of scheduling.
pub fn sum_indexed<F>(n: usize, f: F) -> usize
where
    F: Fn(usize) -> usize + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).sum();
    }
    (0..n).map(f).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_index_order() {
        let out = map_indexed(100, |i| i * 3);
        assert_eq!(out, (0..100).map(|i| i * 3).collect::<Vec<_>>());
    }

    #[test]
    fn toggling_matches_sequential() {
        let seq: Vec<usize> = {
            set_parallel(false);
            let v = map_indexed(64, |i| i * i);
            set_parallel(true);
            v
        };
        let par = map_indexed(64, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(sum_indexed(64, |i| i), (0..64).sum::<usize>());
    }
}

//! Thin execution shims: data-parallel with the `parallel` feature, plain
//! loops without it.
//!
//! Every shim produces results in index order, so the output is identical
//! whichever executor runs it. Callers that fold floating-point values must
//! therefore chunk their work deterministically (fixed chunk sizes, merge in
//! chunk order) rather than relying on reduction order.

#[cfg(feature = "parallel")]
pub(crate) fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn sort_f64(values: &mut [f64]) {
    use rayon::prelude::*;
    values.par_sort_unstable_by(f64::total_cmp);
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn sort_f64(values: &mut [f64]) {
    values.sort_unstable_by(f64::total_cmp);
}

/// Splits `0..n` into contiguous ranges of at most `chunk` items.
pub(crate) fn chunk_ranges(n: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    assert!(chunk > 0);
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_collect_preserves_order() {
        let v = map_collect(5, |i| i * i);
        assert_eq!(v, vec![0, 1, 4, 9, 16]);
    }

    #[test]
    fn chunk_ranges_cover_everything() {
        let ranges = chunk_ranges(10, 3);
        assert_eq!(ranges, vec![0..3, 3..6, 6..9, 9..10]);
        assert!(chunk_ranges(0, 3).is_empty());
    }
}

//! Deterministic execution primitives shared by the numeric modules.
//!
//! Three building blocks cover every hot loop in the crate:
//!
//! * [`tree_sum_by`] — pairwise (tree) summation over an indexed sequence,
//!   used for all `n^2` accumulations so rounding error stays `O(log n)`
//!   instead of `O(n)`;
//! * [`fill_rows`] — row-blocked fill of a dense row-major buffer
//!   (distance matrices);
//! * [`map_slots`] — independent tasks writing into pre-sized slots
//!   (bootstrap replications, matrix-vector products).
//!
//! Every primitive produces bitwise-identical results whether the `parallel`
//! feature is enabled or not, and for any rayon thread count: the summation
//! tree is split at fixed midpoints, rows and slots are written by index,
//! and no reduction depends on scheduling order. The `backend` module exposes
//! both code paths so the bench suite can compare them directly.

/// Below this length tree summation switches to a straight loop.
const TREE_BASE: usize = 64;

/// Minimum segment length before the parallel tree sum forks.
const TREE_FORK_MIN: usize = 1 << 15;

#[doc(hidden)]
pub mod backend {
    use super::{TREE_BASE, TREE_FORK_MIN};

    /// Sequential pairwise summation of `f(start..start+len)`.
    pub fn tree_sum_seq<F>(f: &F, start: usize, len: usize) -> f64
    where
        F: Fn(usize) -> f64 + Sync,
    {
        if len <= TREE_BASE {
            let mut acc = 0.0;
            for i in start..start + len {
                acc += f(i);
            }
            acc
        } else {
            let half = len / 2;
            tree_sum_seq(f, start, half) + tree_sum_seq(f, start + half, len - half)
        }
    }

    /// Parallel pairwise summation; same split points as [`tree_sum_seq`],
    /// so the result is bitwise identical.
    #[cfg(feature = "parallel")]
    pub fn tree_sum_par<F>(f: &F, start: usize, len: usize) -> f64
    where
        F: Fn(usize) -> f64 + Sync,
    {
        if len < TREE_FORK_MIN {
            return tree_sum_seq(f, start, len);
        }
        let half = len / 2;
        let (left, right) = rayon::join(
            || tree_sum_par(f, start, half),
            || tree_sum_par(f, start + half, len - half),
        );
        left + right
    }

    /// Sequential row fill of a `rows x cols` row-major buffer.
    pub fn fill_rows_seq<F>(rows: usize, cols: usize, buf: &mut [f64], f: &F)
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        debug_assert_eq!(buf.len(), rows * cols);
        for (i, chunk) in buf.chunks_mut(cols).enumerate() {
            f(i, chunk);
        }
    }

    /// Parallel row fill; each row is written by exactly one task.
    #[cfg(feature = "parallel")]
    pub fn fill_rows_par<F>(rows: usize, cols: usize, buf: &mut [f64], f: &F)
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        use rayon::prelude::*;
        debug_assert_eq!(buf.len(), rows * cols);
        buf.par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
    }

    /// Sequential slot map.
    pub fn map_slots_seq<T, F>(n: usize, f: &F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }

    /// Parallel slot map; rayon's indexed collect preserves slot order.
    #[cfg(feature = "parallel")]
    pub fn map_slots_par<T, F>(n: usize, min_len: usize, f: &F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .with_min_len(min_len.max(1))
            .map(f)
            .collect()
    }
}

/// Pairwise (tree) sum of `f(0), ..., f(n - 1)`.
pub fn tree_sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        backend::tree_sum_par(&f, 0, n)
    }
    #[cfg(not(feature = "parallel"))]
    {
        backend::tree_sum_seq(&f, 0, n)
    }
}

/// Pairwise (tree) sum of a slice.
pub fn tree_sum(xs: &[f64]) -> f64 {
    tree_sum_by(xs.len(), |i| xs[i])
}

/// Fill a `rows x cols` row-major buffer, one closure call per row.
pub fn fill_rows<F>(rows: usize, cols: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut buf = vec![0.0; rows * cols];
    #[cfg(feature = "parallel")]
    backend::fill_rows_par(rows, cols, &mut buf, &f);
    #[cfg(not(feature = "parallel"))]
    backend::fill_rows_seq(rows, cols, &mut buf, &f);
    buf
}

/// Run `n` independent tasks and collect their results in slot order.
///
/// `min_len` hints the smallest batch a parallel worker should take; use a
/// larger value for very cheap tasks.
pub fn map_slots<T, F>(n: usize, min_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        backend::map_slots_par(n, min_len, &f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = min_len;
        backend::map_slots_seq(n, &f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_sum_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((tree_sum(&xs) - naive).abs() < 1e-12);
    }

    #[test]
    fn tree_sum_is_more_accurate_than_naive_on_adversarial_input() {
        // Alternating huge/tiny magnitudes: tree summation keeps the error
        // bounded; exactness is not required, just agreement with a Kahan sum.
        let xs: Vec<f64> = (0..100_000)
            .map(|i| if i % 2 == 0 { 1.0 } else { 1e-12 })
            .collect();
        let mut kahan = 0.0f64;
        let mut c = 0.0f64;
        for &x in &xs {
            let y = x - c;
            let t = kahan + y;
            c = (t - kahan) - y;
            kahan = t;
        }
        assert!((tree_sum(&xs) - kahan).abs() / kahan.abs() < 1e-14);
    }

    #[test]
    fn parallel_and_sequential_tree_sums_are_bitwise_equal() {
        let xs: Vec<f64> = (0..200_000).map(|i| ((i * 37) as f64).cos()).collect();
        let f = |i: usize| xs[i];
        let seq = backend::tree_sum_seq(&f, 0, xs.len());
        #[cfg(feature = "parallel")]
        {
            let par = backend::tree_sum_par(&f, 0, xs.len());
            assert_eq!(seq.to_bits(), par.to_bits());
        }
        assert_eq!(tree_sum(&xs).to_bits(), seq.to_bits());
    }

    #[test]
    fn fill_rows_writes_every_cell() {
        let buf = fill_rows(7, 5, |i, row| {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (i * 10 + j) as f64;
            }
        });
        assert_eq!(buf.len(), 35);
        assert_eq!(buf[6 * 5 + 4], 64.0);
        assert_eq!(buf[0], 0.0);
    }

    #[test]
    fn map_slots_preserves_order() {
        let out = map_slots(1000, 8, |i| i * i);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, i * i);
        }
    }

    #[test]
    fn tree_sum_empty_and_singleton() {
        assert_eq!(tree_sum(&[]), 0.0);
        assert_eq!(tree_sum(&[4.25]), 4.25);
    }
}

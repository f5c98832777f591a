//! Inner-loop kernels shared by forward and backward passes.
//!
//! Matrix products parallelize over output rows when the work is large
//! enough. Each output element is accumulated in a fixed order inside its
//! row, so parallel and sequential execution produce bit-identical results.

use super::Scalar;
use crate::parallel::parallel_enabled;

/// Below this many multiply-adds a rayon dispatch costs more than it saves.
const PAR_MIN_FLOPS: usize = 1 << 16;

#[inline]
fn row_nn<T: Scalar>(a_row: &[T], b: &[T], k: usize, n: usize, out_row: &mut [T]) {
    for p in 0..k {
        let av = a_row[p];
        if av == T::zero() {
            continue;
        }
        let b_row = &b[p * n..(p + 1) * n];
        for j in 0..n {
            out_row[j] += av * b_row[j];
        }
    }
}

#[inline]
fn row_nt<T: Scalar>(a_row: &[T], b: &[T], k: usize, n: usize, out_row: &mut [T]) {
    // out_row[j] = dot(a_row, b[j, :]) where b is [n, k]
    for j in 0..n {
        let b_row = &b[j * k..(j + 1) * k];
        let mut acc = T::zero();
        for p in 0..k {
            acc += a_row[p] * b_row[p];
        }
        out_row[j] += acc;
    }
}

fn for_each_row<T: Scalar>(
    out: &mut [T],
    n: usize,
    flops: usize,
    body: impl Fn(usize, &mut [T]) + Sync + Send,
) {
    #[cfg(feature = "parallel")]
    if parallel_enabled() && flops >= PAR_MIN_FLOPS && out.len() > n {
        use rayon::prelude::*;
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
        return;
    }
    let _ = flops;
    for (i, row) in out.chunks_mut(n).enumerate() {
        body(i, row);
    }
}

/// `out += a @ b` for `a: [m,k]`, `b: [k,n]`, `out: [m,n]`.
pub fn matmul_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for_each_row(out, n, m * k * n, |i, row| {
        row_nn(&a[i * k..(i + 1) * k], b, k, n, row)
    });
}

/// `out += a @ b^T` for `a: [m,k]`, `b: [n,k]`, `out: [m,n]`.
pub fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for_each_row(out, n, m * k * n, |i, row| {
        row_nt(&a[i * k..(i + 1) * k], b, k, n, row)
    });
}

/// `out += a^T @ b` for `a: [m,k]`, `b: [m,n]`, `out: [k,n]`.
pub fn matmul_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    // Row p of the output gathers column p of `a`; keep the i-loop inside so
    // each output row accumulates in a fixed order.
    for_each_row(out, n, m * k * n, |p, row| {
        for i in 0..m {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += av * b_row[j];
            }
        }
    });
}

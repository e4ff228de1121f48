//! Strided matrix products. All dense contractions in the crate go through
//! [`gemm`], so they share one deterministic summation order.

use crate::cost;

/// Row/column strides of a matrix view, in elements.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub rs: usize,
    pub cs: usize,
}

impl Layout {
    pub const fn row_major(cols: usize) -> Self {
        Layout { rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major `rows x cols` matrix.
    pub const fn transposed(cols: usize) -> Self {
        Layout { rs: 1, cs: cols }
    }

    fn max_offset(self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.rs + (cols - 1) * self.cs
        }
    }
}

/// `c = alpha * a · b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n`.
///
/// When `beta == 0` the prior contents of `c` are ignored (NaNs included).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
    lc: Layout,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c[i * lc.rs + j * lc.cs];
                *v = if beta == 0.0 { 0.0 } else { beta * *v };
            }
        }
        return;
    }
    assert!(la.max_offset(m, k) < a.len(), "gemm: lhs view out of bounds");
    assert!(lb.max_offset(k, n) < b.len(), "gemm: rhs view out of bounds");
    assert!(lc.max_offset(m, n) < c.len(), "gemm: output view out of bounds");
    cost::record((m * k * n) as u64);
    // SAFETY: every view was bounds-checked above; the output does not alias
    // the inputs because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr(),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr(),
            lc.rs as isize,
            lc.cs as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product_matches_hand_result() {
        // [1 2; 3 4] · [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, 1.0, &a, Layout::row_major(2), &b, Layout::row_major(2), 0.0, &mut c, Layout::row_major(2));
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_views_and_accumulation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 0.0, 0.0, 1.0];
        let mut c = [1.0; 4];
        // c = aᵀ·I + c
        gemm(2, 2, 2, 1.0, &a, Layout::transposed(2), &b, Layout::row_major(2), 1.0, &mut c, Layout::row_major(2));
        assert_eq!(c, [2.0, 4.0, 3.0, 5.0]);
    }
}

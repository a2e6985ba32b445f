//! Element types the tape runs on.
//!
//! `f64` is used by every oracle and finite-difference check, `f32` by
//! training. Both route matrix products through `matrixmultiply`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Strided read-only view used by [`gemm`].
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major `rows x cols` view.
    pub fn row_major(data: &'a [T], cols: usize) -> Self {
        MatRef { data, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [T], cols: usize) -> Self {
        MatRef { data, rs: 1, cs: cols }
    }
}

pub trait Scalar:
    Float
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` for `a: m x k`, `b: k x n`, `c` row-major `m x n`.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// In-place elementwise exponential.
    fn exp_slice(xs: &mut [Self]) {
        for x in xs {
            *x = x.exp();
        }
    }

    /// Backend for [`crate::dots::row_dots`]; bounds are already checked.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    fn row_dots_impl(
        a: &[Self],
        m: usize,
        b: &[Self],
        n: usize,
        k: usize,
        out: &mut [Self],
        out_rs: usize,
        out_cs: usize,
        accumulate: bool,
    ) {
        crate::dots::row_dots_generic(a, m, b, n, k, out, out_rs, out_cs, accumulate);
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn exp_slice(xs: &mut [f32]) {
        for x in xs.iter_mut() {
            *x = fast_exp_f32(*x);
        }
    }

    fn row_dots_impl(
        a: &[f32],
        m: usize,
        b: &[f32],
        n: usize,
        k: usize,
        out: &mut [f32],
        out_rs: usize,
        out_cs: usize,
        accumulate: bool,
    ) {
        #[cfg(target_arch = "x86_64")]
        if crate::dots::avx::available() {
            // SAFETY: features detected at runtime; `row_dots` checked bounds.
            unsafe { crate::dots::avx::row_dots(a, m, b, n, k, out, out_rs, out_cs, accumulate) };
            return;
        }
        crate::dots::row_dots_generic(a, m, b, n, k, out, out_rs, out_cs, accumulate);
    }
}

/// Branch-free `exp` for `f32` (relative error below 3e-7 on the finite range).
///
/// Range reduction `x = n ln2 + r` with a degree-6 polynomial on
/// `|r| <= ln2 / 2`. Rounding uses the `1.5 * 2^23` shifter so the loop in
/// `exp_slice` vectorizes without SSE4.1.
#[inline(always)]
pub fn fast_exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_145_75;
    const LN2_LO: f32 = 1.428_606_8e-6;
    const SHIFTER: f32 = 12_582_912.0;
    let x = x.clamp(-87.3, 88.0);
    let shifted = x * LOG2E + SHIFTER;
    let n = shifted - SHIFTER;
    let r = x - n * LN2_HI - n * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.666_666_7e-1
                    + r * (4.166_666_8e-2 + r * (8.333_452e-3 + r * 1.388_731_6e-3)))));
    // the shifter's mantissa holds n in its low bits
    let bits = (shifted.to_bits().wrapping_sub(SHIFTER.to_bits()).wrapping_add(127)) << 23;
    p * f32::from_bits(bits)
}

/// Strided mutable view, the output of [`gemm`].
pub struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> MatMut<'a, T> {
    pub fn row_major(data: &'a mut [T], cols: usize) -> Self {
        MatMut { data, rs: cols, cs: 1 }
    }

    pub fn transposed(data: &'a mut [T], cols: usize) -> Self {
        MatMut { data, rs: 1, cs: cols }
    }
}

/// Safe wrapper over the strided GEMM: `c = alpha * a * b + beta * c`.
///
/// Panics if any view would read or write outside its slice.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    beta: T,
    c: MatMut<'_, T>,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(last(m, n, c.rs, c.cs) < c.data.len(), "gemm: output view out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c.data[i * c.rs + j * c.cs];
                *v = if beta == T::zero() { T::zero() } else { *v * beta };
            }
        }
        return;
    }
    assert!(last(m, k, a.rs, a.cs) < a.data.len(), "gemm: lhs view out of bounds");
    assert!(last(k, n, b.rs, b.cs) < b.data.len(), "gemm: rhs view out of bounds");
    // SAFETY: every index touched by the kernel is bounded by the asserts above.
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_exp_matches_std() {
        let mut worst = 0.0f64;
        let mut x = -80.0f32;
        while x < 80.0 {
            let rel = ((fast_exp_f32(x) as f64 - (x as f64).exp()) / (x as f64).exp()).abs();
            worst = worst.max(rel);
            x += 0.0137;
        }
        assert!(worst < 3e-7, "worst relative error {worst}");
    }

    #[test]
    fn fast_exp_saturates() {
        assert_eq!(fast_exp_f32(-1e4), fast_exp_f32(-87.3));
        assert!(fast_exp_f32(1e4).is_finite());
    }

    #[test]
    fn gemm_transposed_views() {
        // a = [[1,2],[3,4]], b^T where b = [[5,6],[7,8]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(
            2,
            2,
            2,
            1.0,
            MatRef::row_major(&a, 2),
            MatRef::transposed(&b, 2),
            0.0,
            MatMut::row_major(&mut c, 2),
        );
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }
}

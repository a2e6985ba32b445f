//! All-pairs row dot products `out[i, j] (+)= a_i . b_j` for long rows.
//!
//! This is the `A B^T` product with a large inner dimension and few rows,
//! the shape of the attention value and query-gradient products, where a
//! packed GEMM spends most of its time packing.

use crate::scalar::Scalar;

const LANES: usize = 8;

/// Fixed-order dot product: eight interleaved partial sums, then the tail.
pub(crate) fn lane_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = acc.iter().copied().fold(T::zero(), |p, q| p + q);
    for (&x, &y) in ta.iter().zip(tb) {
        s += x * y;
    }
    s
}

/// `a` is `m x k` and `b` is `n x k`, both row-major. The product for
/// `(i, j)` is written to `out[i * out_rs + j * out_cs]`, added to the
/// existing value when `accumulate` is set.
#[allow(clippy::too_many_arguments)]
pub fn row_dots<T: Scalar>(
    a: &[T],
    m: usize,
    b: &[T],
    n: usize,
    k: usize,
    out: &mut [T],
    out_rs: usize,
    out_cs: usize,
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= n * k, "row_dots: input too short");
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * out_rs + (n - 1) * out_cs < out.len(), "row_dots: output too short");
    T::row_dots_impl(a, m, b, n, k, out, out_rs, out_cs, accumulate);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn row_dots_generic<T: Scalar>(
    a: &[T],
    m: usize,
    b: &[T],
    n: usize,
    k: usize,
    out: &mut [T],
    out_rs: usize,
    out_cs: usize,
    accumulate: bool,
) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let v = lane_dot(ar, &b[j * k..(j + 1) * k]);
            let o = &mut out[i * out_rs + j * out_cs];
            *o = if accumulate { *o + v } else { v };
        }
    }
}

#[cfg(target_arch = "x86_64")]
pub(crate) mod avx {
    use std::arch::x86_64::*;

    pub fn available() -> bool {
        use std::sync::OnceLock;
        static HAS: OnceLock<bool> = OnceLock::new();
        *HAS.get_or_init(|| is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"))
    }

    #[target_feature(enable = "avx2,fma")]
    unsafe fn hsum(v: __m256) -> f32 {
        let lo = _mm256_castps256_ps128(v);
        let hi = _mm256_extractf128_ps(v, 1);
        let s = _mm_add_ps(lo, hi);
        let s = _mm_add_ps(s, _mm_movehl_ps(s, s));
        let s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
        _mm_cvtss_f32(s)
    }

    /// Dot products of `R` rows of `a` against `C` rows of `b`, each `k` long.
    ///
    /// # Safety
    /// Requires AVX2 and FMA; every row pointer must address `k` floats.
    #[target_feature(enable = "avx2,fma")]
    unsafe fn tile<const R: usize, const C: usize>(a: [*const f32; R], b: [*const f32; C], k: usize) -> [[f32; C]; R] {
        let mut acc = [[_mm256_setzero_ps(); C]; R];
        let body = k / 8 * 8;
        let mut t = 0;
        while t < body {
            let mut va = [_mm256_setzero_ps(); R];
            for r in 0..R {
                va[r] = _mm256_loadu_ps(a[r].add(t));
            }
            for c in 0..C {
                let vb = _mm256_loadu_ps(b[c].add(t));
                for r in 0..R {
                    acc[r][c] = _mm256_fmadd_ps(va[r], vb, acc[r][c]);
                }
            }
            t += 8;
        }
        let mut out = [[0.0f32; C]; R];
        for r in 0..R {
            for c in 0..C {
                let mut s = hsum(acc[r][c]);
                for u in body..k {
                    s += *a[r].add(u) * *b[c].add(u);
                }
                out[r][c] = s;
            }
        }
        out
    }

    /// # Safety
    /// Requires AVX2 and FMA; bounds are checked by the caller.
    #[allow(clippy::too_many_arguments)]
    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn row_dots(
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
        let ap = |i: usize| a.as_ptr().add(i * k);
        let bp = |j: usize| b.as_ptr().add(j * k);
        let mut store = |i: usize, j: usize, v: f32| {
            let o = &mut out[i * out_rs + j * out_cs];
            *o = if accumulate { *o + v } else { v };
        };
        let mut i = 0;
        while i < m {
            if i + 2 <= m {
                let mut j = 0;
                while j + 4 <= n {
                    let r = tile::<2, 4>([ap(i), ap(i + 1)], [bp(j), bp(j + 1), bp(j + 2), bp(j + 3)], k);
                    for (di, row) in r.iter().enumerate() {
                        for (dj, &v) in row.iter().enumerate() {
                            store(i + di, j + dj, v);
                        }
                    }
                    j += 4;
                }
                while j < n {
                    let r = tile::<2, 1>([ap(i), ap(i + 1)], [bp(j)], k);
                    store(i, j, r[0][0]);
                    store(i + 1, j, r[1][0]);
                    j += 1;
                }
                i += 2;
            } else {
                for j in 0..n {
                    store(i, j, tile::<1, 1>([ap(i)], [bp(j)], k)[0][0]);
                }
                i += 1;
            }
        }
    }
}

//! Forward and backward kernels over raw slices.
//!
//! Layout is always row-major `[N, C, H, W]` for image-like data and
//! `[rows, cols]` for matrices. The graph layer validates shapes before
//! calling in here.

use crate::dots::row_dots;
use crate::scalar::{gemm, MatMut, MatRef, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfold one `[C, H, W]` sample into a `[C*kh*kw, Ho*Wo]` patch matrix.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let plane = ho * wo;
    for ci in 0..g.c_in {
        let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back into `[C, H, W]`.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let plane = ho * wo;
    for ci in 0..g.c_in {
        let dst = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation (no kernel flip) of `batch` samples.
pub fn conv2d_forward<T: Scalar>(x: &[T], batch: usize, w: &[T], g: &ConvGeom) -> Vec<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let plane = ho * wo;
    let in_len = g.c_in * g.h * g.w;
    let out_len = g.c_out * plane;
    let k = g.patch_len();
    let mut out = vec![T::zero(); batch * out_len];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * plane] };
    for n in 0..batch {
        let xs = &x[n * in_len..(n + 1) * in_len];
        let patches: &[T] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, g, &mut cols);
            &cols
        };
        gemm(
            g.c_out,
            k,
            plane,
            T::one(),
            MatRef::row_major(w, k),
            MatRef::row_major(patches, plane),
            T::zero(),
            MatMut::row_major(&mut out[n * out_len..(n + 1) * out_len], plane),
        );
    }
    out
}

/// Gradients of [`conv2d_forward`]. Either output may be skipped.
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    batch: usize,
    w: &[T],
    g: &ConvGeom,
    dy: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
) {
    let plane = g.out_h() * g.out_w();
    let in_len = g.c_in * g.h * g.w;
    let out_len = g.c_out * plane;
    let k = g.patch_len();
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * plane] };
    let mut dcols = if g.is_pointwise() || dx.is_none() {
        Vec::new()
    } else {
        vec![T::zero(); k * plane]
    };
    for n in 0..batch {
        let xs = &x[n * in_len..(n + 1) * in_len];
        let dys = &dy[n * out_len..(n + 1) * out_len];
        if let Some(dw) = dw.as_deref_mut() {
            let patches: &[T] = if g.is_pointwise() {
                xs
            } else {
                im2col(xs, g, &mut cols);
                &cols
            };
            gemm(
                g.c_out,
                plane,
                k,
                T::one(),
                MatRef::row_major(dys, plane),
                MatRef::transposed(patches, plane),
                T::one(),
                MatMut::row_major(dw, k),
            );
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxs = &mut dx[n * in_len..(n + 1) * in_len];
            if g.is_pointwise() {
                gemm(
                    k,
                    g.c_out,
                    plane,
                    T::one(),
                    MatRef::transposed(w, k),
                    MatRef::row_major(dys, plane),
                    T::one(),
                    MatMut::row_major(dxs, plane),
                );
            } else {
                gemm(
                    k,
                    g.c_out,
                    plane,
                    T::one(),
                    MatRef::transposed(w, k),
                    MatRef::row_major(dys, plane),
                    T::zero(),
                    MatMut::row_major(&mut dcols, plane),
                );
                col2im(&dcols, g, dxs);
            }
        }
    }
}

/// Max pooling over `planes` independent `h x w` planes, no padding.
/// Returns the pooled values and the in-plane argmax of each output cell.
pub fn maxpool_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    window: usize,
    stride: usize,
) -> (Vec<T>, Vec<u32>) {
    let ho = (h - window) / stride + 1;
    let wo = (w - window) / stride + 1;
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for ky in 0..window {
                    let row = (oy * stride + ky) * w;
                    for kx in 0..window {
                        let idx = row + ox * stride + kx;
                        // strict > keeps the first maximum in scan order
                        if src[idx] > best {
                            best = src[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx as u32);
            }
        }
    }
    (out, arg)
}

/// Source coordinate for align-corners-false resampling, PyTorch convention:
/// `src = (dst + 0.5) * in / out - 0.5`, clamped below at zero.
#[inline]
fn bilinear_src(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    let frac = src - i0 as f64;
    (i0, i1, frac)
}

pub fn bilinear_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let ys: Vec<_> = (0..out_h).map(|y| bilinear_src(y, h, out_h)).collect();
    let xs: Vec<_> = (0..out_w).map(|x| bilinear_src(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(planes * out_h * out_w);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for &(y0, y1, ly) in &ys {
            let (ly, hy) = (T::of(ly), T::of(1.0 - ly));
            for &(x0, x1, lx) in &xs {
                let (lx, hx) = (T::of(lx), T::of(1.0 - lx));
                let top = hx * src[y0 * w + x0] + lx * src[y0 * w + x1];
                let bottom = hx * src[y1 * w + x0] + lx * src[y1 * w + x1];
                out.push(hy * top + ly * bottom);
            }
        }
    }
    out
}

pub fn bilinear_backward<T: Scalar>(
    dy: &[T],
    planes: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let ys: Vec<_> = (0..out_h).map(|y| bilinear_src(y, h, out_h)).collect();
    let xs: Vec<_> = (0..out_w).map(|x| bilinear_src(x, w, out_w)).collect();
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        let grad = &dy[p * out_h * out_w..(p + 1) * out_h * out_w];
        for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
            let (ly, hy) = (T::of(ly), T::of(1.0 - ly));
            for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                let (lx, hx) = (T::of(lx), T::of(1.0 - lx));
                let g = grad[oy * out_w + ox];
                dst[y0 * w + x0] += g * hy * hx;
                dst[y0 * w + x1] += g * hy * lx;
                dst[y1 * w + x0] += g * ly * hx;
                dst[y1 * w + x1] += g * ly * lx;
            }
        }
    }
    dx
}

const LANES: usize = 8;

/// Maximum with eight independent lanes so the loop vectorizes.
fn lane_max<T: Scalar>(xs: &[T]) -> T {
    let mut acc = [T::neg_infinity(); LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a = if v > *a { v } else { *a };
        }
    }
    let mut m = acc.iter().copied().fold(T::neg_infinity(), T::max);
    for &v in tail {
        m = m.max(v);
    }
    m
}

/// Sum in eight interleaved lanes, then the tail; a fixed order, so results
/// are reproducible.
fn lane_sum<T: Scalar>(xs: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    let mut s = acc.iter().copied().fold(T::zero(), |a, b| a + b);
    for &v in tail {
        s += v;
    }
    s
}

/// Subtract the row max, exponentiate, and return `(max, sum)`.
fn exp_shifted<T: Scalar>(row: &mut [T]) -> (T, T) {
    let max = lane_max(row);
    for v in row.iter_mut() {
        *v -= max;
    }
    T::exp_slice(row);
    (max, lane_sum(row))
}

/// Numerically stable row softmax in place.
pub fn softmax_rows_inplace<T: Scalar>(x: &mut [T], cols: usize) {
    for row in x.chunks_mut(cols) {
        let (_, sum) = exp_shifted(row);
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Rows of the attention matrix processed per block; bounds the scratch
/// buffers at `ATTN_BLOCK x tokens`.
const ATTN_BLOCK: usize = 64;

/// Token attention for one sample with channel-major inputs.
///
/// `q`, `k`, `v` are `[C, T]` (a `C x H x W` map flattened row-major). With
/// `Q = q^T` etc., returns `out = (softmax_rows(Q K^T) V)^T` as `[C, T]` and
/// the per-row log-sum-exp needed to rebuild the softmax in the backward pass.
pub fn attention_forward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    channels: usize,
    tokens: usize,
) -> (Vec<T>, Vec<T>) {
    let mut out = vec![T::zero(); channels * tokens];
    let mut lse = vec![T::zero(); tokens];
    let mut scores = vec![T::zero(); ATTN_BLOCK * tokens];
    let mut r0 = 0;
    while r0 < tokens {
        let rows = ATTN_BLOCK.min(tokens - r0);
        let s = &mut scores[..rows * tokens];
        gemm(
            rows,
            channels,
            tokens,
            T::one(),
            MatRef { data: &q[r0..], rs: 1, cs: tokens },
            MatRef::row_major(k, tokens),
            T::zero(),
            MatMut::row_major(s, tokens),
        );
        for (i, row) in s.chunks_mut(tokens).enumerate() {
            let (max, sum) = exp_shifted(row);
            let inv = T::one() / sum;
            for x in row.iter_mut() {
                *x *= inv;
            }
            lse[r0 + i] = max + sum.ln();
        }
        // out[c, r0 + i] = P_i . V_c
        row_dots(s, rows, v, channels, tokens, &mut out[r0..], 1, tokens, false);
        r0 += rows;
    }
    (out, lse)
}

/// Backward pass of [`attention_forward`], rebuilding the softmax block by
/// block from the saved log-sum-exp. Gradients are accumulated into the
/// `[C, T]` buffers that are present.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    out: &[T],
    lse: &[T],
    dout: &[T],
    channels: usize,
    tokens: usize,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    // delta[t] = sum_c dO[t,c] O[t,c] = rowsum(P * dP)
    let mut delta = vec![T::zero(); tokens];
    for c in 0..channels {
        let o = &out[c * tokens..(c + 1) * tokens];
        let d = &dout[c * tokens..(c + 1) * tokens];
        for t in 0..tokens {
            delta[t] += o[t] * d[t];
        }
    }
    let mut p = vec![T::zero(); ATTN_BLOCK * tokens];
    let mut dp = vec![T::zero(); ATTN_BLOCK * tokens];
    let mut r0 = 0;
    while r0 < tokens {
        let rows = ATTN_BLOCK.min(tokens - r0);
        let p = &mut p[..rows * tokens];
        let dp = &mut dp[..rows * tokens];
        gemm(
            rows,
            channels,
            tokens,
            T::one(),
            MatRef { data: &q[r0..], rs: 1, cs: tokens },
            MatRef::row_major(k, tokens),
            T::zero(),
            MatMut::row_major(p, tokens),
        );
        for (i, row) in p.chunks_mut(tokens).enumerate() {
            let l = lse[r0 + i];
            for x in row.iter_mut() {
                *x -= l;
            }
            T::exp_slice(row);
        }
        gemm(
            rows,
            channels,
            tokens,
            T::one(),
            MatRef { data: &dout[r0..], rs: 1, cs: tokens },
            MatRef::row_major(v, tokens),
            T::zero(),
            MatMut::row_major(dp, tokens),
        );
        // dV^T += P^T dO
        gemm(
            tokens,
            rows,
            channels,
            T::one(),
            MatRef::transposed(p, tokens),
            MatRef { data: &dout[r0..], rs: 1, cs: tokens },
            T::one(),
            MatMut { data: dv, rs: 1, cs: tokens },
        );
        for (i, (ds, pr)) in dp.chunks_mut(tokens).zip(p.chunks(tokens)).enumerate() {
            let d = delta[r0 + i];
            for (x, &pv) in ds.iter_mut().zip(pr) {
                *x = pv * (*x - d);
            }
        }
        // dQ rows += dS K
        row_dots(dp, rows, k, channels, tokens, &mut dq[r0..], 1, tokens, true);
        // dK^T += dS^T Q_rows
        gemm(
            tokens,
            rows,
            channels,
            T::one(),
            MatRef::transposed(dp, tokens),
            MatRef { data: &q[r0..], rs: 1, cs: tokens },
            T::one(),
            MatMut { data: dk, rs: 1, cs: tokens },
        );
        r0 += rows;
    }
}

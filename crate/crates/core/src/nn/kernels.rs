//! Slice-level loops behind the differentiable kernels.
//!
//! Weights are stored `[a, b, k, k]`. The *gather* pass (`conv_gather`) reads a
//! `b`-channel map and writes an `a`-channel map at stride-reduced resolution;
//! the *scatter* pass is its exact adjoint. A regular convolution is a gather
//! whose input gradient is a scatter; a transposed convolution is the reverse.

use crate::autograd::{gemm, gemm_new, Mat, Real};

/// Geometry shared by a gather/scatter pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    /// Channels on the low-resolution ("gathered") side.
    pub a: usize,
    /// Channels on the high-resolution ("scattered") side.
    pub b: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// Extents of the high-resolution side.
    pub h: usize,
    pub w: usize,
}

impl Geometry {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.stride + 1
    }

    /// Range of low-res columns `o` whose tap `kx` lands inside `[0, w)`,
    /// returned with the first high-res column hit.
    #[inline]
    fn col_range(&self, kx: usize, wo: usize) -> (usize, usize, usize) {
        let s = self.stride;
        // need o*s + kx >= pad and o*s + kx - pad < w
        let lo = if kx >= self.pad {
            0
        } else {
            (self.pad - kx).div_ceil(s)
        };
        let hi_excl = {
            // o*s < w + pad - kx
            let lim = self.w + self.pad;
            if lim <= kx {
                0
            } else {
                (lim - kx).div_ceil(s).min(wo)
            }
        };
        let first = lo * s + kx - self.pad;
        (lo, hi_excl.max(lo), first)
    }

    #[inline]
    fn row_of(&self, oy: usize, ky: usize) -> Option<usize> {
        let y = oy * self.stride + ky;
        if y < self.pad || y - self.pad >= self.h {
            None
        } else {
            Some(y - self.pad)
        }
    }
}

/// Unfolds `x: [b, h, w]` into columns `[b*k*k, ho*wo]`; row
/// `(c*k + ky)*k + kx` holds tap `(ky, kx)` of channel `c`.
pub fn im2col<T: Real>(g: &Geometry, x: &[T]) -> Vec<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let zero = T::zero();
    let mut cols = Vec::with_capacity(g.b * g.k * g.k * ho * wo);
    // Written strictly in output order, so no zero-fill pass is needed.
    for c in 0..g.b {
        let x_plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (lo, hi, first) = g.col_range(kx, wo);
                for oy in 0..ho {
                    match g.row_of(oy, ky) {
                        Some(iy) if lo < hi => {
                            let xrow = &x_plane[iy * g.w..(iy + 1) * g.w];
                            cols.resize(cols.len() + lo, zero);
                            if g.stride == 1 {
                                cols.extend_from_slice(&xrow[first..first + (hi - lo)]);
                            } else {
                                cols.extend((0..hi - lo).map(|j| xrow[first + j * g.stride]));
                            }
                            cols.resize(cols.len() + wo - hi, zero);
                        }
                        _ => cols.resize(cols.len() + wo, zero),
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `[b, h, w]`.
pub fn col2im<T: Real>(g: &Geometry, cols: &[T]) -> Vec<T> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let n = ho * wo;
    let mut x = vec![T::zero(); g.b * g.h * g.w];
    for c in 0..g.b {
        let x_plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &cols[((c * g.k + ky) * g.k + kx) * n..][..n];
                let (lo, hi, first) = g.col_range(kx, wo);
                if lo >= hi {
                    continue;
                }
                for oy in 0..ho {
                    let Some(iy) = g.row_of(oy, ky) else { continue };
                    let xrow = &mut x_plane[iy * g.w..(iy + 1) * g.w];
                    let src = &row[oy * wo + lo..oy * wo + hi];
                    if g.stride == 1 {
                        for (d, &v) in xrow[first..first + (hi - lo)].iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (j, &v) in src.iter().enumerate() {
                            xrow[first + j * g.stride] += v;
                        }
                    }
                }
            }
        }
    }
    x
}

/// `out[a, oy, ox] = bias[a] + sum_{b,ky,kx} w[a,b,ky,kx] * x[b, oy*s+ky-p, ox*s+kx-p]`
pub fn conv_gather<T: Real>(g: &Geometry, x: &[T], weight: &[T], bias: Option<&[T]>) -> Vec<T> {
    conv_gather_cols(g, x, weight, bias).0
}

/// [`conv_gather`] that also returns the unfolded input for reuse by
/// [`conv_weight_grad_cols`].
pub fn conv_gather_cols<T: Real>(g: &Geometry, x: &[T], weight: &[T], bias: Option<&[T]>) -> (Vec<T>, Vec<T>) {
    let n = g.out_h() * g.out_w();
    let kdim = g.b * g.k * g.k;
    let cols = im2col(g, x);
    let out = match bias {
        Some(bias) => {
            let mut out = Vec::with_capacity(g.a * n);
            for &bv in bias {
                out.resize(out.len() + n, bv);
            }
            gemm(Mat::new(weight, g.a, kdim), Mat::new(&cols, kdim, n), &mut out, true);
            out
        }
        None => gemm_new(Mat::new(weight, g.a, kdim), Mat::new(&cols, kdim, n)),
    };
    (out, cols)
}

/// Adjoint of [`conv_gather`] (without bias):
/// `out[b, oy*s+ky-p, ox*s+kx-p] += w[a,b,ky,kx] * y[a, oy, ox]`.
pub fn conv_scatter<T: Real>(g: &Geometry, y: &[T], weight: &[T]) -> Vec<T> {
    let n = g.out_h() * g.out_w();
    let kdim = g.b * g.k * g.k;
    let cols = gemm_new(Mat::new(weight, g.a, kdim).t(), Mat::new(y, g.a, n));
    col2im(g, &cols)
}

/// `dw[a,b,ky,kx] = sum_{oy,ox} y[a,oy,ox] * x[b, oy*s+ky-p, ox*s+kx-p]`,
/// the weight gradient shared by both directions.
pub fn conv_weight_grad<T: Real>(g: &Geometry, y: &[T], x: &[T]) -> Vec<T> {
    conv_weight_grad_cols(g, y, &im2col(g, x))
}

/// [`conv_weight_grad`] from an already unfolded input.
pub fn conv_weight_grad_cols<T: Real>(g: &Geometry, y: &[T], cols: &[T]) -> Vec<T> {
    let n = g.out_h() * g.out_w();
    let kdim = g.b * g.k * g.k;
    gemm_new(Mat::new(y, g.a, n), Mat::new(cols, kdim, n).t())
}

/// Per-channel sums with double-precision accumulation.
pub fn channel_sums<T: Real>(y: &[T], channels: usize) -> Vec<T> {
    let plane = y.len() / channels;
    (0..channels)
        .map(|c| T::from_f64_lossy(y[c * plane..(c + 1) * plane].iter().map(|v| v.as_f64()).sum()))
        .collect()
}

/// 2x2 max pooling; returns the pooled map and, per output, the flat input
/// index of the winner (first maximum in row-major window order).
pub fn maxpool2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let i0 = base + 2 * oy * w + 2 * ox;
                let cands = [i0, i0 + 1, i0 + w, i0 + w + 1];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub fn upsample2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * h2 * w2];
    for ch in 0..c {
        for y in 0..h2 {
            let src = &x[ch * h * w + (y / 2) * w..ch * h * w + (y / 2 + 1) * w];
            let dst = &mut out[ch * h2 * w2 + y * w2..ch * h2 * w2 + (y + 1) * w2];
            for (x2, d) in dst.iter_mut().enumerate() {
                *d = src[x2 / 2];
            }
        }
    }
    out
}

/// Gradient of [`upsample2`]: sum over each 2x2 block.
pub fn upsample2_grad<T: Real>(dy: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let w2 = 2 * w;
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let i = ch * 4 * h * w + 2 * y * w2 + 2 * x;
                out[ch * h * w + y * w + x] = dy[i] + dy[i + 1] + dy[i + w2] + dy[i + w2 + 1];
            }
        }
    }
    out
}

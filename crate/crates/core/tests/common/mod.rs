//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written as plainly as possible (nested loops, f64,
//! no shared code with the library) so that agreement means something.

#![allow(dead_code)]

use prednet_lab::autograd::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_tensor<R: Rng>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Direct cross-correlation with zero padding `k / 2`:
/// `out[a, y, x] = bias[a] + Σ_b Σ_dy Σ_dx w[a, b, dy, dx] · in[b, s·y + dy − p, s·x + dx − p]`.
pub fn conv2d_loops(input: &[f64], c: usize, h: usize, w: usize, weight: &[f64], out_c: usize, k: usize, bias: Option<&[f64]>, stride: usize) -> Vec<f64> {
    let p = (k / 2) as isize;
    let (oh, ow) = (h / stride, w / stride);
    let mut out = vec![0.0; out_c * oh * ow];
    for a in 0..out_c {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias.map_or(0.0, |b| b[a]);
                for b in 0..c {
                    for dy in 0..k {
                        for dx in 0..k {
                            let iy = (stride * y) as isize + dy as isize - p;
                            let ix = (stride * x) as isize + dx as isize - p;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += weight[((a * c + b) * k + dy) * k + dx] * input[(b * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(a * oh + y) * ow + x] = acc;
            }
        }
    }
    out
}

/// 11×11 Gaussian weights (σ = 1.5), built in two dimensions at once.
pub fn gaussian_2d() -> Vec<f64> {
    let mut w = Vec::with_capacity(121);
    for i in 0..11 {
        for j in 0..11 {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            w.push((-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp());
        }
    }
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

/// Mean SSIM over every full 11×11 window of one plane, computing the
/// weighted moments of each window from scratch.
pub fn ssim_dense(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let g = gaussian_2d();
    let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let q = (y0 + i) * w + x0 + j;
                    ma += g[i * 11 + j] * a[q];
                    mb += g[i * 11 + j] * b[q];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let q = (y0 + i) * w + x0 + j;
                    let (da, db) = (a[q] - ma, b[q] - mb);
                    va += g[i * 11 + j] * da * da;
                    vb += g[i * 11 + j] * db * db;
                    cov += g[i * 11 + j] * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Shift `(dx, dy)` among `candidates` maximizing `Σ next(p) · prev(p − s)`.
pub fn best_shift(prev: &[f32], next: &[f32], h: usize, w: usize, candidates: &[(i32, i32)]) -> (i32, i32) {
    let score = |(dx, dy): (i32, i32)| {
        let mut acc = 0.0f64;
        for y in 0..h as i32 {
            for x in 0..w as i32 {
                let (sx, sy) = (x - dx, y - dy);
                if sx < 0 || sy < 0 || sx >= w as i32 || sy >= h as i32 {
                    continue;
                }
                acc += next[(y * w as i32 + x) as usize] as f64 * prev[(sy * w as i32 + sx) as usize] as f64;
            }
        }
        acc
    };
    let mut best = candidates[0];
    let mut best_score = score(best);
    for &c in &candidates[1..] {
        let s = score(c);
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

/// 3×3 box blur with edge replication.
pub fn box_blur(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let yy = (y as i32 + dy).clamp(0, h as i32 - 1) as usize;
                    let xx = (x as i32 + dx).clamp(0, w as i32 - 1) as usize;
                    acc += img[yy * w + xx];
                }
            }
            out[y * w + x] = acc / 9.0;
        }
    }
    out
}

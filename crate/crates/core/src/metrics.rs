//! Frame-quality metrics and the last-frame-copy baseline.
//!
//! Images are tensors whose last two axes are height and width; leading axes
//! are treated as independent planes. All arithmetic is double precision.

use std::fmt::Write as _;

use crate::autograd::{Real, Tensor};
use crate::error::{bail, Result};

pub const PSNR_CAP_DB: f64 = 100.0;
pub const DEFAULT_TAU: f64 = 0.01;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Attainable maximum of SSIM, used as `SSIM_max` in the conditioned score.
pub const SSIM_MAX: f64 = 1.0;

fn check_same<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        bail!(Dimension, "image shapes differ: {:?} vs {:?}", a.shape(), b.shape());
    }
    Ok(())
}

fn planes<T: Real>(a: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let s = a.shape();
    if s.len() < 2 {
        bail!(Dimension, "images need at least 2 axes, got {s:?}");
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    Ok((a.len() / (h * w), h, w))
}

pub fn mae<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check_same(a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()).sum();
    Ok(s / a.len() as f64)
}

pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check_same(a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    Ok(s / a.len() as f64)
}

/// Peak signal-to-noise ratio for unit dynamic range, capped at 100 dB.
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let m = mse(a, b)?;
    if m < 1e-10 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian filter over the valid region of one plane.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for ox in 0..wo {
            rows[y * wo + ox] = (0..SSIM_WINDOW).map(|j| k[j] * x[y * w + ox + j]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for oy in 0..ho {
        for ox in 0..wo {
            out[oy * wo + ox] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(oy + i) * wo + ox]).sum();
        }
    }
    out
}

/// Local SSIM from window statistics.
pub fn ssim_from_stats(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean local SSIM over all valid 11x11 windows of every plane.
pub fn ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check_same(a, b)?;
    let (n, h, w) = planes(a)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        bail!(Dimension, "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}");
    }
    let k = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for p in 0..n {
        let pa: Vec<f64> = a.data()[p * h * w..(p + 1) * h * w].iter().map(|v| v.as_f64()).collect();
        let pb: Vec<f64> = b.data()[p * h * w..(p + 1) * h * w].iter().map(|v| v.as_f64()).collect();
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| u * v).collect() };
        let mu_a = filter_valid(&pa, h, w, &k);
        let mu_b = filter_valid(&pb, h, w, &k);
        let e_aa = filter_valid(&prod(&pa, &pa), h, w, &k);
        let e_bb = filter_valid(&prod(&pb, &pb), h, w, &k);
        let e_ab = filter_valid(&prod(&pa, &pb), h, w, &k);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            total += ssim_from_stats(ma, mb, e_aa[i] - ma * ma, e_bb[i] - mb * mb, e_ab[i] - ma * mb);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `(SSIM_max - ssim(prev, pred)) * ssim(actual, pred)`: high only for
/// predictions that are both accurate and different from the previous frame.
pub fn conditioned_ssim<T: Real>(actual_prev: &Tensor<T>, actual: &Tensor<T>, pred: &Tensor<T>) -> Result<f64> {
    check_same(actual_prev, actual)?;
    Ok((SSIM_MAX - ssim(actual_prev, pred)?) * ssim(actual, pred)?)
}

/// Variance of the 3x3 Laplacian response over interior pixels.
pub fn sharpness<T: Real>(img: &Tensor<T>) -> Result<f64> {
    let (n, h, w) = planes(img)?;
    if h < 3 || w < 3 {
        return Ok(0.0);
    }
    let d = img.data();
    let at = |p: usize, y: usize, x: usize| d[p * h * w + y * w + x].as_f64();
    let mut resp = Vec::with_capacity(n * (h - 2) * (w - 2));
    for p in 0..n {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                resp.push(at(p, y - 1, x) + at(p, y + 1, x) + at(p, y, x - 1) + at(p, y, x + 1) - 4.0 * at(p, y, x));
            }
        }
    }
    let mean = resp.iter().sum::<f64>() / resp.len() as f64;
    Ok(resp.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / resp.len() as f64)
}

/// Indices `t >= 1` whose frame differs from its predecessor by MAE > `tau`.
pub fn movement_mask<T: Real>(frames: &Tensor<T>, tau: f64) -> Result<Vec<usize>> {
    if frames.rank() < 3 || frames.shape()[0] < 2 {
        bail!(Dimension, "movement mask needs [T >= 2, ...], got {:?}", frames.shape());
    }
    if !(tau > 0.0) {
        bail!(Contract, "tau must be positive, got {tau}");
    }
    let mut out = Vec::new();
    let mut prev = frames.index0(0)?;
    for t in 1..frames.shape()[0] {
        let cur = frames.index0(t)?;
        if mae(&cur, &prev)? > tau {
            out.push(t);
        }
        prev = cur;
    }
    Ok(out)
}

/// `pred[t] = frames[t - 1]`; entry 0 repeats frame 0 and is never scored.
pub fn baseline_copy<T: Real>(frames: &Tensor<T>) -> Result<Tensor<T>> {
    let s = frames.shape();
    if s.len() < 2 || s[0] < 2 {
        bail!(Dimension, "copy baseline needs [T >= 2, ...], got {s:?}");
    }
    let inner = frames.len() / s[0];
    let mut data = Vec::with_capacity(frames.len());
    data.extend_from_slice(&frames.data()[..inner]);
    data.extend_from_slice(&frames.data()[..frames.len() - inner]);
    Tensor::new(s, data)
}

/// Scores of one predicted frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameScore {
    pub t: usize,
    pub moving: bool,
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub ssim_cond: f64,
    pub sharpness: f64,
}

/// Scores every frame `t >= 1` of a `[T, ...]` prediction against the truth.
pub fn score_frames<T: Real>(actual: &Tensor<T>, pred: &Tensor<T>, tau: f64) -> Result<Vec<FrameScore>> {
    check_same(actual, pred)?;
    let moving = movement_mask(actual, tau)?;
    let mut out = Vec::with_capacity(actual.shape()[0] - 1);
    for t in 1..actual.shape()[0] {
        let (prev, cur, p) = (actual.index0(t - 1)?, actual.index0(t)?, pred.index0(t)?);
        let s_pred = ssim(&cur, &p)?;
        out.push(FrameScore {
            t,
            moving: moving.contains(&t),
            mae: mae(&cur, &p)?,
            psnr: psnr(&cur, &p)?,
            ssim: s_pred,
            ssim_cond: (SSIM_MAX - ssim(&prev, &p)?) * s_pred,
            sharpness: sharpness(&p)?,
        });
    }
    Ok(out)
}

/// Aggregated values of a set of frames.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub ssim_cond: f64,
    pub sharpness: f64,
    /// `None` when no frame moved.
    pub psnr_movement: Option<f64>,
    pub ssim_movement: Option<f64>,
}

pub const SUMMARY_FIELDS: [&str; 7] = ["mae", "psnr", "ssim", "psnr_movement", "ssim_movement", "ssim_cond", "sharpness"];

impl Summary {
    pub fn of(frames: &[FrameScore]) -> Self {
        let mean = |it: &mut dyn Iterator<Item = f64>| -> Option<f64> {
            let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| s / n as f64)
        };
        let all = |f: fn(&FrameScore) -> f64| mean(&mut frames.iter().map(f)).unwrap_or(f64::NAN);
        let moving = |f: fn(&FrameScore) -> f64| mean(&mut frames.iter().filter(|s| s.moving).map(f));
        Self {
            mae: all(|s| s.mae),
            psnr: all(|s| s.psnr),
            ssim: all(|s| s.ssim),
            ssim_cond: all(|s| s.ssim_cond),
            sharpness: all(|s| s.sharpness),
            psnr_movement: moving(|s| s.psnr),
            ssim_movement: moving(|s| s.ssim),
        }
    }

    /// Values in [`SUMMARY_FIELDS`] order.
    pub fn values(&self) -> [Option<f64>; 7] {
        [
            Some(self.mae),
            Some(self.psnr),
            Some(self.ssim),
            self.psnr_movement,
            self.ssim_movement,
            Some(self.ssim_cond),
            Some(self.sharpness),
        ]
    }

    /// Field-wise `self - other`; absent when either side is.
    pub fn minus(&self, other: &Self) -> [Option<f64>; 7] {
        let (a, b) = (self.values(), other.values());
        std::array::from_fn(|i| Some(a[i]? - b[i]?))
    }
}

/// Model and copy-baseline scores of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceReport {
    pub id: usize,
    pub model: Vec<FrameScore>,
    pub copy: Vec<FrameScore>,
}

impl SequenceReport {
    pub fn new<T: Real>(id: usize, actual: &Tensor<T>, pred: &Tensor<T>, tau: f64) -> Result<Self> {
        Ok(Self {
            id,
            model: score_frames(actual, pred, tau)?,
            copy: score_frames(actual, &baseline_copy(actual)?, tau)?,
        })
    }

    pub fn deltas(&self) -> [Option<f64>; 7] {
        Summary::of(&self.model).minus(&Summary::of(&self.copy))
    }
}

/// Per-sequence rows plus aggregates, ordered by sequence id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub sequences: Vec<SequenceReport>,
}

impl MetricsReport {
    pub fn push(&mut self, s: SequenceReport) {
        self.sequences.push(s);
    }

    fn pooled(&self, pick: fn(&SequenceReport) -> &[FrameScore]) -> Summary {
        let frames: Vec<FrameScore> = self.sequences.iter().flat_map(|s| pick(s).iter().copied()).collect();
        Summary::of(&frames)
    }

    /// Model scores pooled over every scored frame of every sequence.
    pub fn aggregate(&self) -> Summary {
        self.pooled(|s| &s.model)
    }

    pub fn aggregate_copy(&self) -> Summary {
        self.pooled(|s| &s.copy)
    }

    /// Per-sequence deltas against the copy baseline, averaged over the
    /// sequences where the delta exists.
    pub fn mean_deltas(&self) -> [Option<f64>; 7] {
        let rows: Vec<[Option<f64>; 7]> = self.sequences.iter().map(SequenceReport::deltas).collect();
        std::array::from_fn(|i| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r[i]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
    }

    /// One row per sequence and a final `all` row; absent values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sequence");
        for f in SUMMARY_FIELDS {
            let _ = write!(s, ",{f}");
        }
        for f in SUMMARY_FIELDS {
            let _ = write!(s, ",delta_{f}");
        }
        s.push('\n');
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9e}"));
        let mut row = |name: String, vals: [Option<f64>; 7], deltas: [Option<f64>; 7]| {
            s.push_str(&name);
            for v in vals.into_iter().chain(deltas) {
                s.push(',');
                s.push_str(&cell(v));
            }
            s.push('\n');
        };
        for seq in &self.sequences {
            row(seq.id.to_string(), Summary::of(&seq.model).values(), seq.deltas());
        }
        row("all".into(), self.aggregate().values(), self.mean_deltas());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Tensor<f64> {
        Tensor::from_fn(&[1, h, w], |i| f(i / w, i % w))
    }

    fn noise(h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        Tensor::from_fn(&[1, h, w], |_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 10_000) as f64 / 10_000.0
        })
    }

    #[test]
    fn mae_examples() {
        let a = noise(4, 4, 1);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((mae(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        let c = noise(4, 4, 2);
        assert_eq!(mae(&a, &c).unwrap(), mae(&c, &a).unwrap());
        assert!(matches!(mae(&a, &noise(4, 5, 1)), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn psnr_examples() {
        let a = img(8, 8, |_, _| 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let b = img(8, 8, |_, _| 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let zero = img(8, 8, |_, _| 0.0);
        let one = img(8, 8, |_, _| 1.0);
        assert!(psnr(&zero, &one).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_symmetry_and_size() {
        let a = noise(16, 16, 3);
        let b = noise(16, 16, 4);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(matches!(ssim(&noise(8, 8, 1), &noise(8, 8, 2)), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn conditioned_ssim_examples() {
        let prev = noise(16, 16, 5);
        assert_eq!(conditioned_ssim(&prev, &prev, &prev).unwrap(), 0.0);
        let cur = noise(16, 16, 6);
        let v = conditioned_ssim(&prev, &cur, &cur).unwrap();
        assert!((v - (1.0 - ssim(&prev, &cur).unwrap())).abs() < 1e-12 && v > 0.0);
    }

    #[test]
    fn sharpness_examples() {
        assert_eq!(sharpness(&img(8, 8, |_, _| 0.3)).unwrap(), 0.0);
        assert!(sharpness(&img(8, 8, |y, x| if (y, x) == (4, 4) { 1.0 } else { 0.0 })).unwrap() > 0.0);
    }

    #[test]
    fn movement_mask_examples() {
        let still = Tensor::<f64>::full(&[4, 1, 4, 4], 0.2);
        assert!(movement_mask(&still, DEFAULT_TAU).unwrap().is_empty());
        let ramp = Tensor::<f64>::from_fn(&[4, 1, 4, 4], |i| 0.1 * (i / 16) as f64);
        assert_eq!(movement_mask(&ramp, DEFAULT_TAU).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn copy_of_still_sequence() {
        let still = Tensor::<f64>::from_fn(&[3, 1, 12, 12], |i| (i % 144) as f64 / 144.0);
        let rep = SequenceReport::new(0, &still, &baseline_copy(&still).unwrap(), DEFAULT_TAU).unwrap();
        for f in &rep.model {
            assert_eq!(f.mae, 0.0);
            assert_eq!(f.ssim_cond, 0.0);
        }
        let s = Summary::of(&rep.model);
        assert_eq!(s.ssim_movement, None);
        assert!(rep.deltas().iter().all(|d| d.is_none_or(|v| v == 0.0)));
    }

    #[test]
    fn csv_has_row_per_sequence_and_aggregate() {
        let seq = Tensor::<f64>::from_fn(&[3, 1, 12, 12], |i| ((i * 7919) % 101) as f64 / 101.0);
        let mut r = MetricsReport::default();
        for id in 0..2 {
            r.push(SequenceReport::new(id, &seq, &baseline_copy(&seq).unwrap(), DEFAULT_TAU).unwrap());
        }
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().last().unwrap().starts_with("all,"));
        assert!(r.mean_deltas().iter().all(|d| *d == Some(0.0)));
    }
}

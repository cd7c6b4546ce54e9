//! Moving-glyph videos over static shape backgrounds, and the `VSEQ`
//! sequence container.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{bail, Result};

pub const NUM_DIRECTIONS: usize = 8;

const UNIT_STEPS: [(i32, i32); NUM_DIRECTIONS] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Compass step for a direction index (0 = east, counter-clockwise, y down).
pub fn direction_vector(index: usize, speed: i32) -> Result<(i32, i32)> {
    match UNIT_STEPS.get(index) {
        Some(&(dx, dy)) => Ok((dx * speed, dy * speed)),
        None => bail!(Contract, "direction index {index} outside 0..8"),
    }
}

/// Inverse of [`direction_vector`] on unit steps; `None` for (0, 0).
pub fn direction_index(dx: i32, dy: i32) -> Option<usize> {
    UNIT_STEPS.iter().position(|&s| s == (dx.signum(), dy.signum()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle,
    Circle,
    Triangle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Height, width.
    pub canvas: [usize; 2],
    pub num_shapes: usize,
    pub shape_kinds: Vec<ShapeKind>,
    pub glyph_size: usize,
    /// Pixels per frame; 0 gives still sequences.
    pub speed: i32,
    pub seq_len: usize,
    /// Base level and shape intensities are drawn from here.
    pub background_range: [f32; 2],
    /// Peak glyph intensity range.
    pub glyph_range: [f32; 2],
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            canvas: [32, 32],
            num_shapes: 6,
            shape_kinds: vec![ShapeKind::Rectangle, ShapeKind::Circle, ShapeKind::Triangle],
            glyph_size: 10,
            speed: 1,
            seq_len: 20,
            background_range: [0.0, 0.5],
            glyph_range: [0.8, 1.0],
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.canvas;
        let g = self.glyph_size;
        if g == 0 || g + 2 > h || g + 2 > w {
            bail!(Config, "glyph of {g} px does not fit a {h}x{w} canvas with a 1 px margin");
        }
        if self.speed < 0 {
            bail!(Config, "speed must be non-negative");
        }
        // The reflected step must land inside the allowed range.
        let room = (h.min(w) - g - 2) as i32;
        if self.speed > room {
            bail!(Config, "speed {} exceeds the free travel of {room} px", self.speed);
        }
        if self.seq_len < 2 {
            bail!(Config, "sequences need at least 2 frames");
        }
        if self.num_shapes > 0 && self.shape_kinds.is_empty() {
            bail!(Config, "shape_kinds is empty");
        }
        for (name, [lo, hi]) in [("background_range", self.background_range), ("glyph_range", self.glyph_range)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                bail!(Config, "{name} must satisfy 0 <= lo <= hi <= 1");
            }
        }
        Ok(())
    }

    /// FNV-1a over the serialized spec; stable across runs and platforms.
    pub fn hash(&self) -> u64 {
        let text = toml::to_string(self).unwrap_or_default();
        text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }
}

/// Seed of the `i`-th item drawn from a base seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f32; 2]) -> f32 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// `[H, W]` background: a base level overdrawn by `num_shapes` shapes.
pub fn gen_background(seed: u64, spec: &SceneSpec) -> Vec<f32> {
    let [h, w] = spec.canvas;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = spec.background_range[0];
    let mut img = vec![base; h * w];
    for _ in 0..spec.num_shapes {
        let kind = spec.shape_kinds[rng.gen_range(0..spec.shape_kinds.len())];
        let v = uniform(&mut rng, spec.background_range);
        let (hf, wf) = (h as f32, w as f32);
        match kind {
            ShapeKind::Rectangle => {
                let x0 = rng.gen_range(0..w);
                let y0 = rng.gen_range(0..h);
                let x1 = (x0 + rng.gen_range(2..=(w / 2).max(2))).min(w);
                let y1 = (y0 + rng.gen_range(2..=(h / 2).max(2))).min(h);
                for y in y0..y1 {
                    img[y * w + x0..y * w + x1].fill(v);
                }
            }
            ShapeKind::Circle => {
                let cx = rng.gen_range(0.0..wf);
                let cy = rng.gen_range(0.0..hf);
                let r = rng.gen_range(2.0..(hf.min(wf) / 4.0).max(2.5));
                fill(&mut img, w, |px, py| (px - cx).powi(2) + (py - cy).powi(2) <= r * r, v);
            }
            ShapeKind::Triangle => {
                let mut p = [(0.0f32, 0.0f32); 3];
                for q in &mut p {
                    *q = (rng.gen_range(0.0..wf), rng.gen_range(0.0..hf));
                }
                fill(&mut img, w, |px, py| inside_triangle(p, px, py), v);
            }
        }
    }
    img
}

fn fill(img: &mut [f32], w: usize, inside: impl Fn(f32, f32) -> bool, v: f32) {
    for (i, px) in img.iter_mut().enumerate() {
        let (x, y) = ((i % w) as f32 + 0.5, (i / w) as f32 + 0.5);
        if inside(x, y) {
            *px = v;
        }
    }
}

fn inside_triangle(p: [(f32, f32); 3], x: f32, y: f32) -> bool {
    let cross = |(ax, ay): (f32, f32), (bx, by): (f32, f32)| (bx - ax) * (y - ay) - (by - ay) * (x - ax);
    let d = [cross(p[0], p[1]), cross(p[1], p[2]), cross(p[2], p[0])];
    let neg = d.iter().any(|&v| v < 0.0);
    let pos = d.iter().any(|&v| v > 0.0);
    !(neg && pos)
}

/// Square alpha masks in `[0, 1]`, all `size x size`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphSet {
    pub size: usize,
    pub glyphs: Vec<Vec<f32>>,
}

impl GlyphSet {
    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    /// Ten seven-segment digits, used when no digit file is available.
    pub fn builtin(size: usize) -> Self {
        // Segments a..g as bits 0..6.
        const DIGITS: [u8; 10] = [0x3F, 0x06, 0x5B, 0x4F, 0x66, 0x6D, 0x7D, 0x07, 0x7F, 0x6F];
        let s = size as f32;
        let t = (s / 5.0).max(1.0);
        let (l, r) = (s * 0.2, s * 0.8);
        let (top, mid, bot) = (s * 0.1, s * 0.5, s * 0.9);
        let seg_rects = [
            (l, top - t / 2.0, r, top + t / 2.0),
            (r - t, top, r, mid),
            (r - t, mid, r, bot),
            (l, bot - t / 2.0, r, bot + t / 2.0),
            (l, mid, l + t, bot),
            (l, top, l + t, mid),
            (l, mid - t / 2.0, r, mid + t / 2.0),
        ];
        let glyphs = DIGITS
            .iter()
            .map(|&bits| {
                let mut g = vec![0.0f32; size * size];
                for (i, &(x0, y0, x1, y1)) in seg_rects.iter().enumerate() {
                    if bits & (1 << i) == 0 {
                        continue;
                    }
                    for (p, v) in g.iter_mut().enumerate() {
                        let (x, y) = ((p % size) as f32 + 0.5, (p / size) as f32 + 0.5);
                        if x >= x0 && x < x1 && y >= y0 && y < y1 {
                            *v = 1.0;
                        }
                    }
                }
                g
            })
            .collect();
        Self { size, glyphs }
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

/// Parses an IDX image file and resizes every image to `size x size`
/// (nearest neighbour).
pub fn parse_digits_idx(bytes: &[u8], size: usize) -> Result<GlyphSet> {
    if bytes.len() < 16 {
        bail!(Format, "IDX header needs 16 bytes, got {}", bytes.len());
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != IDX_IMAGES_MAGIC {
        bail!(Format, "bad IDX magic {:#010x}", word(0));
    }
    let (n, rows, cols) = (word(1) as usize, word(2) as usize, word(3) as usize);
    if rows == 0 || cols == 0 {
        bail!(Format, "IDX images have zero extent {rows}x{cols}");
    }
    let need = n.checked_mul(rows * cols).and_then(|v| v.checked_add(16));
    if need != Some(bytes.len()) {
        bail!(Format, "IDX header claims {n} images of {rows}x{cols}, file has {} bytes", bytes.len());
    }
    let glyphs = bytes[16..]
        .chunks_exact(rows * cols)
        .map(|img| {
            (0..size * size)
                .map(|p| {
                    let (y, x) = (p / size, p % size);
                    img[(y * rows / size) * cols + x * cols / size] as f32 / 255.0
                })
                .collect()
        })
        .collect();
    Ok(GlyphSet { size, glyphs })
}

/// Reads digit glyphs from an IDX file, falling back to
/// [`GlyphSet::builtin`] when the file does not exist.
pub fn load_digits_idx(path: impl AsRef<Path>, size: usize) -> Result<GlyphSet> {
    let path = path.as_ref();
    match fs::read(path) {
        Ok(bytes) => parse_digits_idx(&bytes, size),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("{} not found, using the built-in glyph set", path.display());
            Ok(GlyphSet::builtin(size))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceMeta {
    pub seed: u64,
    pub spec_hash: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    /// `[T, 1, H, W]`.
    pub frames: Tensor<f32>,
    /// Direction applied between frame `t` and `t + 1`; the last entry
    /// repeats the one before it.
    pub labels: Vec<u8>,
    /// Absent for sequences read back from disk.
    pub meta: Option<SequenceMeta>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Label of the whole sequence: the direction at its last frame.
    pub fn final_label(&self) -> usize {
        self.labels.last().copied().unwrap_or(0) as usize
    }
}

/// One glyph moving over a static background, bouncing off the canvas edges.
pub fn gen_sequence(seed: u64, spec: &SceneSpec, glyphs: &GlyphSet) -> Result<LabeledSequence> {
    spec.validate()?;
    if glyphs.is_empty() {
        bail!(Contract, "glyph set is empty");
    }
    if glyphs.size != spec.glyph_size {
        bail!(Contract, "glyphs are {} px, scene wants {}", glyphs.size, spec.glyph_size);
    }
    let [h, w] = spec.canvas;
    let gs = spec.glyph_size;
    let background = gen_background(derive_seed(seed, u64::MAX), spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let glyph = &glyphs.glyphs[rng.gen_range(0..glyphs.len())];
    let intensity = uniform(&mut rng, spec.glyph_range);
    let mut dir = rng.gen_range(0..NUM_DIRECTIONS);
    let (max_x, max_y) = ((w - gs - 1) as i32, (h - gs - 1) as i32);
    let mut x = rng.gen_range(1..=max_x);
    let mut y = rng.gen_range(1..=max_y);

    let t_len = spec.seq_len;
    let mut frames = Vec::with_capacity(t_len * h * w);
    let mut labels = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let start = frames.len();
        frames.extend_from_slice(&background);
        composite(&mut frames[start..], w, glyph, gs, x as usize, y as usize, intensity);
        if t + 1 == t_len {
            break;
        }
        let (mut dx, mut dy) = direction_vector(dir, spec.speed)?;
        if !(1..=max_x).contains(&(x + dx)) {
            dx = -dx;
        }
        if !(1..=max_y).contains(&(y + dy)) {
            dy = -dy;
        }
        if let Some(d) = direction_index(dx, dy) {
            dir = d;
        }
        labels.push(dir as u8);
        x += dx;
        y += dy;
    }
    labels.push(*labels.last().expect("seq_len >= 2"));
    Ok(LabeledSequence {
        frames: Tensor::new(&[t_len, 1, h, w], frames)?,
        labels,
        meta: Some(SequenceMeta {
            seed,
            spec_hash: spec.hash(),
        }),
    })
}

fn composite(img: &mut [f32], w: usize, glyph: &[f32], gs: usize, x: usize, y: usize, intensity: f32) {
    for gy in 0..gs {
        for gx in 0..gs {
            let a = glyph[gy * gs + gx];
            let p = &mut img[(y + gy) * w + x + gx];
            *p = *p * (1.0 - a) + intensity * a;
        }
    }
}

/// `n` sequences; item `i` uses `derive_seed(seed, i)`.
pub fn gen_dataset(seed: u64, spec: &SceneSpec, glyphs: &GlyphSet, n: usize) -> Result<Vec<LabeledSequence>> {
    (0..n as u64).map(|i| gen_sequence(derive_seed(seed, i), spec, glyphs)).collect()
}

/// Count of each direction label over all frames.
pub fn class_balance(sequences: &[LabeledSequence]) -> [u64; NUM_DIRECTIONS] {
    let mut counts = [0u64; NUM_DIRECTIONS];
    for s in sequences {
        for &l in &s.labels {
            counts[l as usize % NUM_DIRECTIONS] += 1;
        }
    }
    counts
}

pub fn class_balance_csv(sequences: &[LabeledSequence]) -> String {
    let counts = class_balance(sequences);
    let total: u64 = counts.iter().sum();
    let mut s = String::from("label,count,fraction\n");
    for (l, &c) in counts.iter().enumerate() {
        let frac = if total == 0 { 0.0 } else { c as f64 / total as f64 };
        let _ = writeln!(s, "{l},{c},{frac:.6}");
    }
    s
}

const VSEQ_MAGIC: &[u8; 4] = b"VSEQ";
const VSEQ_VERSION: u8 = 1;
/// Magic, version byte and five u32 counts.
pub const VSEQ_HEADER_LEN: usize = 4 + 1 + 5 * 4;

/// Serializes sequences that all share one `[T, C, H, W]` shape.
pub fn encode_vseq(sequences: &[LabeledSequence]) -> Result<Vec<u8>> {
    let dims: [usize; 4] = match sequences.first() {
        Some(s) => match s.frames.shape() {
            &[t, c, h, w] => [t, c, h, w],
            other => bail!(Dimension, "frames must be [T, C, H, W], got {other:?}"),
        },
        None => [0; 4],
    };
    let mut counts = vec![sequences.len()];
    counts.extend_from_slice(&dims);
    let mut out = Vec::with_capacity(VSEQ_HEADER_LEN + sequences.len() * (dims.iter().product::<usize>() * 4 + dims[0]));
    out.extend_from_slice(VSEQ_MAGIC);
    out.push(VSEQ_VERSION);
    for c in counts {
        let Ok(c) = u32::try_from(c) else {
            bail!(Format, "count {c} does not fit in u32");
        };
        out.extend_from_slice(&c.to_le_bytes());
    }
    for (i, s) in sequences.iter().enumerate() {
        if s.frames.shape() != dims || s.labels.len() != dims[0] {
            bail!(
                Dimension,
                "sequence {i} has frames {:?} and {} labels, expected {dims:?}",
                s.frames.shape(),
                s.labels.len()
            );
        }
        for v in s.frames.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&s.labels);
    }
    Ok(out)
}

pub fn decode_vseq(buf: &[u8]) -> Result<Vec<LabeledSequence>> {
    if buf.len() < VSEQ_HEADER_LEN {
        bail!(Format, "VSEQ header needs {VSEQ_HEADER_LEN} bytes, got {}", buf.len());
    }
    if &buf[..4] != VSEQ_MAGIC {
        bail!(Format, "bad VSEQ magic");
    }
    if buf[4] != VSEQ_VERSION {
        bail!(Format, "unsupported VSEQ version {}", buf[4]);
    }
    let count = |i: usize| u32::from_le_bytes(buf[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
    let (n, t, c, h, w) = (count(0), count(1), count(2), count(3), count(4));
    let frame_len = [t, c, h, w].iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let record = frame_len.and_then(|f| f.checked_mul(4)).and_then(|b| b.checked_add(t));
    let body = record.and_then(|r| r.checked_mul(n));
    if body != Some(buf.len() - VSEQ_HEADER_LEN) {
        bail!(
            Format,
            "VSEQ header claims {n} sequences of [{t}, {c}, {h}, {w}], body has {} bytes",
            buf.len() - VSEQ_HEADER_LEN
        );
    }
    if n > 0 && frame_len == Some(0) {
        bail!(Format, "VSEQ sequences have a zero extent");
    }
    let (frame_len, record) = (frame_len.unwrap_or(0), record.unwrap_or(0));
    let mut out = Vec::with_capacity(n);
    for rec in buf[VSEQ_HEADER_LEN..].chunks_exact(record.max(1)).take(n) {
        let data = rec[..4 * frame_len]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let labels = rec[4 * frame_len..].to_vec();
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_DIRECTIONS) {
            bail!(Format, "label {bad} outside 0..8");
        }
        out.push(LabeledSequence {
            frames: Tensor::new(&[t, c, h, w], data)?,
            labels,
            meta: None,
        });
    }
    Ok(out)
}

pub fn write_vseq(sequences: &[LabeledSequence], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_vseq(sequences)?)?;
    Ok(())
}

pub fn read_vseq(path: impl AsRef<Path>) -> Result<Vec<LabeledSequence>> {
    decode_vseq(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions() {
        assert_eq!(direction_vector(0, 1).unwrap(), (1, 0));
        assert_eq!(direction_vector(4, 1).unwrap(), (-1, 0));
        assert_eq!(direction_vector(1, 2).unwrap(), (2, -2));
        for i in 0..8 {
            let (x, y) = direction_vector(i, 1).unwrap();
            assert_eq!(direction_vector((i + 4) % 8, 1).unwrap(), (-x, -y));
            assert_eq!(direction_index(x, y), Some(i));
        }
        assert!(matches!(direction_vector(8, 1), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn empty_scene_is_uniform() {
        let spec = SceneSpec {
            num_shapes: 0,
            background_range: [0.25, 0.5],
            ..Default::default()
        };
        let bg = gen_background(3, &spec);
        assert!(bg.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn background_is_deterministic_and_in_range() {
        let spec = SceneSpec::default();
        let a = gen_background(11, &spec);
        assert_eq!(a, gen_background(11, &spec));
        assert_ne!(a, gen_background(12, &spec));
        assert!(a.iter().all(|&v| (0.0..=0.5).contains(&v)));
    }

    #[test]
    fn still_variant_repeats_frames() {
        let spec = SceneSpec {
            speed: 0,
            seq_len: 5,
            ..Default::default()
        };
        let s = gen_sequence(4, &spec, &GlyphSet::builtin(10)).unwrap();
        let f0 = s.frames.index0(0).unwrap();
        for t in 1..5 {
            assert_eq!(s.frames.index0(t).unwrap(), f0);
        }
        assert!(s.labels.iter().all(|&l| l == s.labels[0]));
    }

    #[test]
    fn last_label_repeats() {
        let s = gen_sequence(9, &SceneSpec::default(), &GlyphSet::builtin(10)).unwrap();
        let n = s.labels.len();
        assert_eq!(s.labels[n - 1], s.labels[n - 2]);
        assert_eq!(s.frames.shape(), &[20, 1, 32, 32]);
        assert!(s.frames.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn builtin_glyphs() {
        let g = GlyphSet::builtin(10);
        assert_eq!(g.len(), 10);
        assert_eq!(g, GlyphSet::builtin(10));
        let distinct: std::collections::BTreeSet<Vec<u32>> =
            g.glyphs.iter().map(|v| v.iter().map(|x| x.to_bits()).collect()).collect();
        assert_eq!(distinct.len(), 10);
    }

    fn idx_bytes(n: u32, rows: u32, cols: u32) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend((0..n * rows * cols).map(|i| (i % 256) as u8));
        b
    }

    #[test]
    fn idx_header_arithmetic() {
        let g = parse_digits_idx(&idx_bytes(3, 28, 28), 10).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.glyphs.iter().all(|x| x.len() == 100));
        let mut b = idx_bytes(3, 28, 28);
        b.pop();
        assert!(matches!(parse_digits_idx(&b, 10), Err(crate::Error::Format(_))));
        let mut b = idx_bytes(1, 4, 4);
        b[3] = 0x01;
        assert!(matches!(parse_digits_idx(&b, 10), Err(crate::Error::Format(_))));
    }

    #[test]
    fn missing_idx_falls_back() {
        let g = load_digits_idx("/nonexistent/digits.idx", 10).unwrap();
        assert_eq!(g, GlyphSet::builtin(10));
    }

    #[test]
    fn empty_vseq_is_header_only() {
        let b = encode_vseq(&[]).unwrap();
        assert_eq!(b.len(), VSEQ_HEADER_LEN);
        assert!(decode_vseq(&b).unwrap().is_empty());
    }

    #[test]
    fn vseq_rejects_oversized_header() {
        let s = gen_dataset(1, &SceneSpec { seq_len: 3, ..Default::default() }, &GlyphSet::builtin(10), 2).unwrap();
        let mut b = encode_vseq(&s).unwrap();
        b[5] = 3;
        assert!(matches!(decode_vseq(&b), Err(crate::Error::Format(_))));
        let mut b = encode_vseq(&s).unwrap();
        b[0] = b'X';
        assert!(matches!(decode_vseq(&b), Err(crate::Error::Format(_))));
    }

    #[test]
    fn class_balance_counts_every_frame() {
        let spec = SceneSpec { seq_len: 4, ..Default::default() };
        let s = gen_dataset(2, &spec, &GlyphSet::builtin(10), 5).unwrap();
        assert_eq!(class_balance(&s).iter().sum::<u64>(), 20);
        assert_eq!(class_balance_csv(&s).lines().count(), 9);
    }
}

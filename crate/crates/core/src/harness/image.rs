//! Netpbm writers (binary PGM and PPM, 8 bit).

use std::fs;
use std::path::Path;

use crate::error::{bail, Result};

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[f64]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        bail!(Dimension, "PGM of {width}x{height} needs {} pixels, got {}", width * height, pixels.len());
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| byte(v)));
    Ok(out)
}

/// `pixels` holds interleaved RGB triples.
pub fn encode_ppm(width: usize, height: usize, pixels: &[[f64; 3]]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        bail!(Dimension, "PPM of {width}x{height} needs {} pixels, got {}", width * height, pixels.len());
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().flat_map(|p| p.map(byte)));
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    fs::write(path, encode_pgm(width, height, pixels)?)?;
    Ok(())
}

pub fn write_ppm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[[f64; 3]]) -> Result<()> {
    fs::write(path, encode_ppm(width, height, pixels)?)?;
    Ok(())
}

/// Rescales to `[0, 1]` by the min/max of the input; constant input maps to 0.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Lays out equally sized tiles on a grid with a 1 px gap.
pub struct Grid {
    pub tile_w: usize,
    pub tile_h: usize,
    pub cols: usize,
    pub rows: usize,
    pub pixels: Vec<f64>,
}

impl Grid {
    pub fn new(tile_w: usize, tile_h: usize, cols: usize, rows: usize) -> Self {
        let (w, h) = (cols * (tile_w + 1) - 1, rows * (tile_h + 1) - 1);
        Self {
            tile_w,
            tile_h,
            cols,
            rows,
            pixels: vec![1.0; w * h],
        }
    }

    pub fn width(&self) -> usize {
        self.cols * (self.tile_w + 1) - 1
    }

    pub fn height(&self) -> usize {
        self.rows * (self.tile_h + 1) - 1
    }

    pub fn put(&mut self, col: usize, row: usize, tile: &[f64]) {
        let w = self.width();
        for y in 0..self.tile_h {
            let dst = (row * (self.tile_h + 1) + y) * w + col * (self.tile_w + 1);
            self.pixels[dst..dst + self.tile_w].copy_from_slice(&tile[y * self.tile_w..(y + 1) * self.tile_w]);
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_pgm(path, self.width(), self.height(), &self.pixels)
    }
}

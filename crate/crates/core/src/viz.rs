//! Attention heatmaps: bilinear upsampling, Gaussian smoothing, PGM export
//! and an ASCII overlay against the scene grid.

use std::fs;
use std::path::Path;

use crate::data::Scene;
use crate::error::{Result, SanError};

/// Row-major grayscale intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    /// Attention layer the map was drawn from (1-based).
    pub layer: usize,
}

impl Heatmap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel with the largest intensity; ties go to the first in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    /// Divides by the maximum unless the map is all zero.
    pub fn normalize(&mut self) {
        let max = self.data.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut self.data {
                *v /= max;
            }
        }
    }

    /// Mean intensity of each of the `g×g` blocks.
    pub fn block_means(&self, g: usize) -> Vec<f64> {
        let (bw, bh) = (self.width / g, self.height / g);
        let mut out = vec![0.0; g * g];
        for y in 0..g * bh {
            for x in 0..g * bw {
                out[(y / bh) * g + x / bw] += self.get(x, y);
            }
        }
        for v in &mut out {
            *v /= (bw * bh) as f64;
        }
        out
    }
}

/// Reshapes `p` to `g×g` and bilinearly upsamples to `target×target`,
/// normalised to max 1. Pixel centres map to grid coordinates
/// `(x + 0.5)/scale − 0.5`, clamped to the grid.
pub fn upsample_attention(p: &[f64], g: usize, target: usize) -> Result<Heatmap> {
    if g == 0 || p.len() != g * g {
        return Err(SanError::contract(format!("{} attention weights do not fill a {g}x{g} grid", p.len())));
    }
    if target == 0 || !target.is_multiple_of(g) {
        return Err(SanError::contract(format!("target size {target} is not a multiple of grid side {g}")));
    }
    let scale = (target / g) as f64;
    let coord = |px: usize| {
        let c = ((px as f64 + 0.5) / scale - 0.5).clamp(0.0, (g - 1) as f64);
        let lo = c.floor() as usize;
        let hi = (lo + 1).min(g - 1);
        (lo, hi, c - lo as f64)
    };
    let axis: Vec<(usize, usize, f64)> = (0..target).map(coord).collect();
    let mut data = Vec::with_capacity(target * target);
    for &(y0, y1, ty) in &axis {
        for &(x0, x1, tx) in &axis {
            let top = p[y0 * g + x0] * (1.0 - tx) + p[y0 * g + x1] * tx;
            let bottom = p[y1 * g + x0] * (1.0 - tx) + p[y1 * g + x1] * tx;
            data.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    let mut h = Heatmap { width: target, height: target, data, layer: 0 };
    h.normalize();
    Ok(h)
}

/// Default blur width: half the per-region pixel side.
pub fn default_sigma(g: usize, target: usize) -> f64 {
    (target / g) as f64 / 2.0
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

fn convolve_axis(src: &[f64], w: usize, h: usize, kernel: &[f64], horizontal: bool) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let off = j as isize - r;
                let (sx, sy) = if horizontal {
                    ((x as isize + off).clamp(0, w as isize - 1) as usize, y)
                } else {
                    (x, (y as isize + off).clamp(0, h as isize - 1) as usize)
                };
                acc += kv * src[sy * w + sx];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Separable Gaussian convolution with clamped edges, not renormalised.
pub fn gaussian_convolve(h: &Heatmap, sigma: f64) -> Result<Heatmap> {
    if !(sigma > 0.0) {
        return Err(SanError::contract(format!("blur sigma must be positive, got {sigma}")));
    }
    let k = gaussian_kernel(sigma);
    let rows = convolve_axis(&h.data, h.width, h.height, &k, true);
    let data = convolve_axis(&rows, h.width, h.height, &k, false);
    Ok(Heatmap { data, ..h.clone() })
}

/// [`gaussian_convolve`] followed by max-normalisation.
pub fn gaussian_blur(h: &Heatmap, sigma: f64) -> Result<Heatmap> {
    let mut out = gaussian_convolve(h, sigma)?;
    out.normalize();
    Ok(out)
}

/// Binary `P5` image, `floor(v·255 + 0.5)` per pixel.
pub fn pgm_bytes(h: &Heatmap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", h.width, h.height).into_bytes();
    out.extend(h.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8));
    out
}

pub fn export_pgm(h: &Heatmap, path: &Path) -> Result<()> {
    fs::write(path, pgm_bytes(h)).map_err(|e| SanError::io(path, e))
}

/// Parses a `P5` file with maxval 255 into `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| SanError::Format(format!("pgm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
    let (w, h) = (num(fields[1])?, num(fields[2])?);
    let pixels = &bytes[(pos + 1).min(bytes.len())..];
    if pixels.len() != w * h {
        return Err(bad(&format!("expected {} pixels, found {}", w * h, pixels.len())));
    }
    Ok((w, h, pixels.to_vec()))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    parse_pgm(&fs::read(path).map_err(|e| SanError::io(path, e))?)
}

const SHADES: [char; 5] = [' ', '.', ':', '*', '#'];

/// Per-region shading by quantile of block-mean intensity, printed beside
/// the scene's object labels.
pub fn overlay_ascii(h: &Heatmap, scene: &Scene) -> String {
    let g = scene.grid_side;
    let means = h.block_means(g);
    let mut sorted = means.clone();
    sorted.sort_by(f64::total_cmp);
    let max = sorted.last().copied().unwrap_or(0.0);
    let shade = |v: f64| {
        if max <= 0.0 {
            return SHADES[0];
        }
        if v >= max {
            return SHADES[4];
        }
        let rank = sorted.partition_point(|&s| s < v) as f64 / sorted.len() as f64;
        SHADES[((rank * 4.0) as usize).min(3)]
    };
    let mut out = format!("layer {}\n", h.layer);
    for y in 0..g {
        let mut left = String::new();
        let mut right = String::new();
        for x in 0..g {
            let c = shade(means[y * g + x]);
            left.push(c);
            left.push(c);
            right.push_str(&scene.label(y * g + x));
            right.push(' ');
        }
        out.push_str(&format!("|{left}|  {}\n", right.trim_end()));
    }
    out
}

//! Region feature maps, the `SANF` feature file and the region projection
//! `v_I = tanh(W_I f_I + b_I)`.
//!
//! `SANF` layout (little-endian): magic `b"SANF"`, `u32` version = 1, `u32 m`,
//! `u32 d_raw`, then `m·d_raw` `f32` values row-major by region.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Result, SanError};
use crate::params::{glorot_uniform, Bound, ParamId, ParamStore};

pub const FEATURE_MAGIC: &[u8; 4] = b"SANF";
pub const FEATURE_VERSION: u32 = 1;
pub const DEFAULT_IMAGE_SIZE: usize = 448;
const HEADER_LEN: usize = 16;

/// Per-region features `f_I`: `m = g²` rows of `d_raw` values, regions in
/// row-major order over the `g×g` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatureMap {
    grid_side: usize,
    features: Tensor,
    pub source_image_size: usize,
}

impl RegionFeatureMap {
    /// `features` is `m×d_raw`; `m` must be a perfect square.
    pub fn new(features: Tensor) -> Result<Self> {
        if !features.is_matrix() {
            return Err(SanError::dim("region_features", format!("expected m×d_raw, got {:?}", features.shape())));
        }
        let m = features.rows();
        let g = perfect_square_root(m)
            .ok_or_else(|| SanError::Format(format!("region count {m} is not a perfect square")))?;
        if !features.all_finite() {
            return Err(SanError::Format("non-finite region feature".into()));
        }
        Ok(RegionFeatureMap { grid_side: g, features, source_image_size: DEFAULT_IMAGE_SIZE })
    }

    pub fn regions(&self) -> usize {
        self.features.rows()
    }

    pub fn raw_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn region(&self, i: usize) -> &[f64] {
        let d = self.raw_dim();
        &self.features.data()[i * d..(i + 1) * d]
    }

    /// Pixel block `(x0, y0, side)` covered by region `i`.
    pub fn pixel_block(&self, i: usize) -> (usize, usize, usize) {
        region_pixel_block(i, self.grid_side, self.source_image_size)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (m, d) = (self.regions(), self.raw_dim());
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * m * d);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(m as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for &v in self.features.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(SanError::Format(format!("feature file truncated: {} header bytes", bytes.len())));
        }
        if &bytes[..4] != FEATURE_MAGIC {
            return Err(SanError::Format("bad feature file magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != FEATURE_VERSION {
            return Err(SanError::Format(format!("unsupported feature file version {version}")));
        }
        let (m, d) = (word(8) as usize, word(12) as usize);
        let want = HEADER_LEN + 4 * m * d;
        if bytes.len() != want {
            return Err(SanError::Format(format!(
                "feature payload holds {} bytes, header declares {m}×{d} ({} bytes)",
                bytes.len() - HEADER_LEN,
                4 * m * d
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        Self::new(Tensor::matrix(m, d, data)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| SanError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| SanError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn perfect_square_root(m: usize) -> Option<usize> {
    let g = (m as f64).sqrt().round() as usize;
    (g * g == m && m > 0).then_some(g)
}

/// Region `i` of a `g×g` grid sits at column `i mod g`, row `i div g`, and
/// covers a square block of side `image_size / g` pixels.
pub fn region_pixel_block(i: usize, grid_side: usize, image_size: usize) -> (usize, usize, usize) {
    let side = image_size / grid_side;
    ((i % grid_side) * side, (i / grid_side) * side, side)
}

/// `W_I` (`d×d_raw`) and `b_I` (`d×1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageProjection {
    pub w: ParamId,
    pub b: ParamId,
    pub raw_dim: usize,
    pub dim: usize,
}

impl ImageProjection {
    pub fn init(store: &mut ParamStore, raw_dim: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let w = store.add("image.w", glorot_uniform(dim, raw_dim, rng));
        let b = store.add("image.b", Tensor::zeros(&[dim, 1]));
        ImageProjection { w, b, raw_dim, dim }
    }
}

/// Puts the features on the tape as a `d_raw×m` constant (one region per column).
pub fn feature_columns(tape: &mut Tape<'_>, f: &RegionFeatureMap) -> Var {
    tape.constant(f.features().transpose())
}

/// `v_I = tanh(W_I f_I + b_I)`, a `d×m` matrix whose column `i` encodes region `i`.
pub fn project_regions(tape: &mut Tape<'_>, bound: &Bound, p: &ImageProjection, f_cols: Var) -> Result<Var> {
    let raw = tape.value(f_cols).rows();
    if raw != p.raw_dim {
        return Err(SanError::dim(
            "project_regions",
            format!("features have {raw} raw dims, projection expects {}", p.raw_dim),
        ));
    }
    let z = tape.matmul(bound[p.w], f_cols)?;
    let z = tape.add_columns(z, bound[p.b])?;
    tape.tanh(z)
}

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Result, SanError};
use crate::image::RegionFeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
    Green,
    Yellow,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Circle, Shape::Square, Shape::Triangle, Shape::Star];

    pub fn word(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Star => "star",
        }
    }

    pub fn from_word(w: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.word() == w)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Blue, Color::Green, Color::Yellow];

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Blue => "blue",
            Color::Green => "green",
            Color::Yellow => "yellow",
        }
    }

    pub fn from_word(w: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.word() == w)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Object {
    pub shape: Shape,
    pub color: Color,
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.color.word(), self.shape.word())
    }
}

/// A `g×g` grid of cells, row-major, each empty or holding one object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub id: u32,
    pub grid_side: usize,
    pub cells: Vec<Option<Object>>,
}

impl Scene {
    pub fn empty(id: u32, grid_side: usize) -> Self {
        Scene { id, grid_side, cells: vec![None; grid_side * grid_side] }
    }

    pub fn place(&mut self, x: usize, y: usize, obj: Object) {
        self.cells[y * self.grid_side + x] = Some(obj);
    }

    /// `(column, row)` of cell `i`.
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.grid_side, i / self.grid_side)
    }

    pub fn objects(&self) -> impl Iterator<Item = (usize, Object)> + '_ {
        self.cells.iter().enumerate().filter_map(|(i, c)| c.map(|o| (i, o)))
    }

    pub fn object_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Cells sharing an edge with `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let g = self.grid_side;
        let (x, y) = self.coords(i);
        let mut out = Vec::with_capacity(4);
        if y > 0 {
            out.push(i - g);
        }
        if x > 0 {
            out.push(i - 1);
        }
        if x + 1 < g {
            out.push(i + 1);
        }
        if y + 1 < g {
            out.push(i + g);
        }
        out
    }

    pub fn occupied_neighbors(&self, i: usize) -> Vec<usize> {
        self.neighbors(i).into_iter().filter(|&n| self.cells[n].is_some()).collect()
    }

    /// Two-letter cell label: color initial then shape letter (`C`ircle,
    /// s`Q`uare, `T`riangle, `S`tar), e.g. `rC` for a red circle.
    pub fn label(&self, i: usize) -> String {
        match self.cells[i] {
            None => "..".into(),
            Some(o) => {
                let c = o.color.word().chars().next().unwrap_or('?');
                let s = match o.shape {
                    Shape::Circle => 'C',
                    Shape::Square => 'Q',
                    Shape::Triangle => 'T',
                    Shape::Star => 'S',
                };
                format!("{c}{s}")
            }
        }
    }
}

/// Places between `count.0` and `count.1` objects (inclusive) in distinct
/// cells with uniformly drawn shape and color.
pub fn generate_scene(rng: &mut impl Rng, id: u32, grid_side: usize, count: (usize, usize)) -> Result<Scene> {
    let (lo, hi) = count;
    let cells = grid_side * grid_side;
    if lo < 2 || lo > hi || hi > cells {
        return Err(SanError::Generation(format!(
            "object count range {lo}..={hi} is not satisfiable on a {grid_side}x{grid_side} grid (need 2 <= lo <= hi <= {cells})"
        )));
    }
    let n = rng.gen_range(lo..=hi);
    let mut positions: Vec<usize> = (0..cells).collect();
    positions.shuffle(rng);
    let mut scene = Scene::empty(id, grid_side);
    for &p in &positions[..n] {
        let shape = Shape::ALL[rng.gen_range(0..4)];
        let color = Color::ALL[rng.gen_range(0..4)];
        scene.cells[p] = Some(Object { shape, color });
    }
    Ok(scene)
}

/// Semantic block width: one-hot shape, one-hot color, x/g, y/g.
pub const SEMANTIC_DIM: usize = 10;

/// Region `i` gets `[one-hot shape | one-hot color | x/g | y/g | 0…]` plus
/// `N(0, σ²)` noise on every coordinate. Values are rounded to `f32` so the
/// in-memory map equals its `SANF` serialisation.
pub fn render_region_features(
    scene: &Scene,
    raw_dim: usize,
    noise: f64,
    rng: &mut impl Rng,
) -> Result<RegionFeatureMap> {
    if raw_dim < SEMANTIC_DIM {
        return Err(SanError::contract(format!("raw_dim {raw_dim} is below the {SEMANTIC_DIM} semantic coordinates")));
    }
    if !(noise >= 0.0) {
        return Err(SanError::contract(format!("noise must be non-negative, got {noise}")));
    }
    let g = scene.grid_side;
    let m = g * g;
    let normal = Normal::new(0.0, noise).map_err(|e| SanError::contract(e.to_string()))?;
    let mut data = vec![0.0; m * raw_dim];
    for (i, region) in data.chunks_mut(raw_dim).enumerate() {
        if let Some(obj) = scene.cells[i] {
            region[obj.shape.index()] = 1.0;
            region[4 + obj.color.index()] = 1.0;
        }
        let (x, y) = scene.coords(i);
        region[8] = x as f64 / g as f64;
        region[9] = y as f64 / g as f64;
        if noise > 0.0 {
            for v in region.iter_mut() {
                *v += normal.sample(rng);
            }
        }
        for v in region.iter_mut() {
            *v = f64::from(*v as f32);
        }
    }
    RegionFeatureMap::new(Tensor::matrix(m, raw_dim, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_objects_on_two_by_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = generate_scene(&mut rng, 0, 2, (2, 2)).unwrap();
            assert_eq!(s.object_count(), 2);
        }
    }

    #[test]
    fn fixed_seed_reproduces_scene() {
        let a = generate_scene(&mut ChaCha8Rng::seed_from_u64(7), 3, 7, (3, 6)).unwrap();
        let b = generate_scene(&mut ChaCha8Rng::seed_from_u64(7), 3, 7, (3, 6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_counts_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(generate_scene(&mut rng, 0, 2, (5, 5)).is_err());
        assert!(generate_scene(&mut rng, 0, 3, (1, 3)).is_err());
    }

    #[test]
    fn marginals_are_uniform() {
        // chi-square over 4 categories (3 dof): 3σ-equivalent critical value ≈ 14.16
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut shapes = [0usize; 4];
        let mut colors = [0usize; 4];
        for i in 0..10_000 {
            let s = generate_scene(&mut rng, i, 7, (2, 6)).unwrap();
            for (_, o) in s.objects() {
                shapes[o.shape.index()] += 1;
                colors[o.color.index()] += 1;
            }
        }
        for counts in [shapes, colors] {
            let total: usize = counts.iter().sum();
            let expected = total as f64 / 4.0;
            let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            assert!(chi2 < 14.16, "chi2 = {chi2}, counts {counts:?}");
        }
    }

    #[test]
    fn noiseless_rendering() {
        let mut scene = Scene::empty(0, 3);
        scene.place(0, 0, Object { shape: Shape::Circle, color: Color::Red });
        let f = render_region_features(&scene, 12, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(f.regions(), 9);
        let r0 = f.region(0);
        assert_eq!(&r0[..8], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&r0[8..10], &[0.0, 0.0]);
        assert_eq!(r0[..8].iter().filter(|&&v| v == 1.0).count(), 2);
        let r5 = f.region(5);
        assert!(r5[..8].iter().all(|&v| v == 0.0));
        assert_eq!(r5[8], f64::from((2.0f64 / 3.0) as f32));
        assert_eq!(r5[9], f64::from((1.0f64 / 3.0) as f32));
        assert!(r5[10..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_scene_has_zero_semantics() {
        let scene = Scene::empty(0, 4);
        let f = render_region_features(&scene, 10, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for i in 0..16 {
            assert!(f.region(i)[..8].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn raw_dim_must_fit_semantics() {
        let scene = Scene::empty(0, 2);
        assert!(render_region_features(&scene, 9, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn noisy_features_decode_to_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut right, mut total) = (0, 0);
        while total < 1000 {
            let scene = generate_scene(&mut rng, 0, 7, (6, 12)).unwrap();
            let f = render_region_features(&scene, 16, 0.1, &mut rng).unwrap();
            for (i, obj) in scene.objects() {
                let r = f.region(i);
                let argmax = |s: &[f64]| (0..4).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
                if argmax(&r[..4]) == obj.shape.index() && argmax(&r[4..8]) == obj.color.index() {
                    right += 1;
                }
                total += 1;
            }
        }
        assert!(right as f64 / total as f64 >= 0.99, "{right}/{total}");
    }

    #[test]
    fn neighbors_are_four_connected() {
        let s = Scene::empty(0, 3);
        assert_eq!(s.neighbors(0), vec![1, 3]);
        assert_eq!(s.neighbors(4), vec![1, 3, 5, 7]);
        assert_eq!(s.neighbors(8), vec![5, 7]);
    }
}

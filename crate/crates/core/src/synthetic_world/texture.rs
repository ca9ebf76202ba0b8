use super::geometry::mix64;
use super::scene::{LayerIndex, Scene, CARPARK, CROSSING, DRIVABLE, WALKWAY};

pub const TEXEL: f64 = 0.1;
pub const STRIPE: f64 = 0.5;
const NOISE_CELL: f64 = 2.0;
const NOISE_AMPLITUDE: f64 = 0.03;

pub const GRASS: [f64; 3] = [0.30, 0.45, 0.20];
pub const WALKWAY_COLOR: [f64; 3] = [0.70, 0.65, 0.55];
pub const CARPARK_COLOR: [f64; 3] = [0.45, 0.45, 0.55];
pub const ROAD: [f64; 3] = [0.25, 0.25, 0.27];
pub const PAINT: [f64; 3] = [0.90, 0.90, 0.90];
pub const SKY: [f64; 3] = [0.60, 0.75, 0.95];
pub const OCCLUDER: [f64; 3] = [0.45, 0.30, 0.15];
/// Indexed by object class id.
pub const OBJECT_COLORS: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [0.80, 0.10, 0.10],
    [0.10, 0.20, 0.80],
    [0.90, 0.80, 0.10],
];

/// Ground color field: flat layer colors plus smooth value noise, sampled
/// bilinearly from a virtual lattice of 0.1 m texels.
pub struct Texture<'a> {
    scene: &'a Scene,
    index: LayerIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Material {
    Grass,
    Carpark,
    Walkway,
    Road,
    Paint,
}

impl<'a> Texture<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        Texture {
            scene,
            index: LayerIndex::new(scene),
        }
    }

    pub fn index(&self) -> &LayerIndex {
        &self.index
    }

    fn material(&self, p: [f64; 2]) -> Material {
        let l = self.index.classify(self.scene, p);
        if l[CROSSING] {
            if let Some(poly) = self.index.crossing_at(self.scene, p) {
                let (a, b) = (poly[0], poly[3]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let n = (dx * dx + dy * dy).sqrt();
                let across = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / n;
                if (across / STRIPE).floor().rem_euclid(2.0) == 0.0 {
                    return Material::Paint;
                }
            }
            return Material::Road;
        }
        if l[DRIVABLE] {
            Material::Road
        } else if l[WALKWAY] {
            Material::Walkway
        } else if l[CARPARK] {
            Material::Carpark
        } else {
            Material::Grass
        }
    }

    fn lattice_noise(&self, i: i64, j: i64) -> f64 {
        let h = mix64(self.scene.seed ^ mix64((i as u64) ^ mix64(j as u64).rotate_left(17)));
        ((h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * NOISE_AMPLITUDE
    }

    fn noise(&self, p: [f64; 2]) -> f64 {
        let (x, y) = (p[0] / NOISE_CELL, p[1] / NOISE_CELL);
        let (i, j) = (x.floor(), y.floor());
        let (fx, fy) = (x - i, y - j);
        let (i, j) = (i as i64, j as i64);
        let n00 = self.lattice_noise(i, j);
        let n10 = self.lattice_noise(i + 1, j);
        let n01 = self.lattice_noise(i, j + 1);
        let n11 = self.lattice_noise(i + 1, j + 1);
        (n00 * (1.0 - fx) + n10 * fx) * (1.0 - fy) + (n01 * (1.0 - fx) + n11 * fx) * fy
    }

    fn texel(&self, i: i64, j: i64) -> [f64; 3] {
        let p = [(i as f64 + 0.5) * TEXEL, (j as f64 + 0.5) * TEXEL];
        let base = match self.material(p) {
            Material::Grass => GRASS,
            Material::Carpark => CARPARK_COLOR,
            Material::Walkway => WALKWAY_COLOR,
            Material::Road => ROAD,
            Material::Paint => PAINT,
        };
        let n = self.noise(p);
        [base[0] + n, base[1] + n, base[2] + n]
    }

    /// Color at a world ground point.
    pub fn color(&self, p: [f64; 2]) -> [f64; 3] {
        let (x, y) = (p[0] / TEXEL - 0.5, p[1] / TEXEL - 0.5);
        let (i, j) = (x.floor(), y.floor());
        let (fx, fy) = (x - i, y - j);
        let (i, j) = (i as i64, j as i64);
        let t00 = self.texel(i, j);
        let t10 = self.texel(i + 1, j);
        let t01 = self.texel(i, j + 1);
        let t11 = self.texel(i + 1, j + 1);
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = (t00[k] * (1.0 - fx) + t10[k] * fx) * (1.0 - fy) + (t01[k] * (1.0 - fx) + t11[k] * fx) * fy;
        }
        out
    }

    /// True when the material changes within `radius` of `p`.
    pub fn near_edge(&self, p: [f64; 2], radius: f64) -> bool {
        let m = self.material(p);
        (0..16).any(|k| {
            let a = k as f64 * std::f64::consts::TAU / 16.0;
            [0.5, 1.0].iter().any(|&f| {
                let q = [p[0] + f * radius * a.cos(), p[1] + f * radius * a.sin()];
                self.material(q) != m
            })
        })
    }
}

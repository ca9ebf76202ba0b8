use rayon::prelude::*;

use crate::camera_geometry::{PinholeCamera, Pose};
use crate::warping::ImageRaster;

use super::geometry::{clip_ray, Polygon};
use super::scene::Scene;
use super::texture::{Texture, OBJECT_COLORS, OCCLUDER, SKY};

/// Objects are drawn as low boxes over their footprints.
pub const OBJECT_RENDER_HEIGHT: f64 = 0.5;

/// Vertical prism that can block a viewing ray.
#[derive(Debug, Clone)]
pub struct Prism {
    pub footprint: Polygon,
    pub height: f64,
    pub color: [f64; 3],
    center: [f64; 2],
    radius: f64,
}

impl Prism {
    pub fn new(mut footprint: Polygon, height: f64, color: [f64; 3]) -> Self {
        if super::geometry::polygon_area(&footprint) < 0.0 {
            footprint.reverse();
        }
        let n = footprint.len() as f64;
        let center = [
            footprint.iter().map(|p| p[0]).sum::<f64>() / n,
            footprint.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
        let radius = footprint
            .iter()
            .map(|p| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        Prism {
            footprint,
            height,
            color,
            center,
            radius,
        }
    }

    /// Ray parameter of the first hit of `o + t·d`, if any.
    pub fn hit(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        let dxy = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if dxy > 0.0 {
            let (vx, vy) = (self.center[0] - o[0], self.center[1] - o[1]);
            let dist = (vx * d[1] - vy * d[0]).abs() / dxy;
            if dist > self.radius {
                return None;
            }
        }
        let (t0, t1) = clip_ray(&self.footprint, [o[0], o[1]], [d[0], d[1]])?;
        let z = |t: f64| o[2] + t * d[2];
        let z0 = z(t0);
        if (0.0..=self.height).contains(&z0) {
            return Some(t0);
        }
        if z0 > self.height && d[2] < 0.0 {
            let t = (self.height - o[2]) / d[2];
            if t <= t1 {
                return Some(t);
            }
        }
        None
    }
}

/// Everything that can hide the ground at time `t`.
pub fn scene_prisms(scene: &Scene, t: f64) -> Vec<Prism> {
    let mut out: Vec<Prism> = scene
        .occluders
        .iter()
        .map(|o| Prism::new(o.footprint.clone(), o.height, OCCLUDER))
        .collect();
    for obj in &scene.objects {
        out.push(Prism::new(
            obj.footprint_at(t),
            obj.height.min(OBJECT_RENDER_HEIGHT),
            OBJECT_COLORS[obj.class_id],
        ));
    }
    out
}

/// First prism hit by the segment from `o` to the ground point `p`.
pub fn ground_point_hidden(prisms: &[Prism], o: [f64; 3], p: [f64; 2]) -> bool {
    let d = [p[0] - o[0], p[1] - o[1], -o[2]];
    prisms.iter().any(|pr| pr.hit(o, d).is_some_and(|t| t < 1.0 - 1e-9))
}

/// Renders the scene at time `t` through a camera whose pose maps camera
/// coordinates to world coordinates.
pub fn render_image(
    scene: &Scene,
    texture: &Texture,
    camera: &PinholeCamera<f64>,
    camera_to_world: &Pose<f64>,
    t: f64,
) -> ImageRaster<f64> {
    let prisms = scene_prisms(scene, t);
    let o = camera_to_world.translation.0;
    let mut img = ImageRaster::new(camera.height, camera.width, 3);
    let w = camera.width;
    img.data.par_chunks_mut(w * 3).enumerate().for_each(|(row, line)| {
        for col in 0..w {
            let dir = camera_to_world
                .rotation
                .mul_vec(&camera.back_project(col as f64, row as f64))
                .0;
            let mut best = f64::INFINITY;
            let mut blocker = None;
            if dir[2] < 0.0 {
                best = -o[2] / dir[2];
            }
            for pr in &prisms {
                if let Some(t) = pr.hit(o, dir) {
                    if t < best {
                        best = t;
                        blocker = Some(pr.color);
                    }
                }
            }
            let color = match blocker {
                Some(c) => c,
                None if best.is_finite() => texture.color([o[0] + best * dir[0], o[1] + best * dir[1]]),
                None => SKY,
            };
            line[col * 3..col * 3 + 3].copy_from_slice(&color);
        }
    });
    img
}

//! Simulated LIDAR visibility over a BEV lattice.
//!
//! A cell is non-occluded when at least one ray crosses its footprint while
//! the ray is still travelling (not yet absorbed by an obstacle, the ground
//! or the range limit) and no higher than `pass_height` above the ground.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bev_grid::{FovMask, GridSpec, Mask};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec<T> {
    /// Sensor position in the reference ego frame.
    pub origin: [T; 3],
    pub azimuth_count: usize,
    /// Beam elevations in radians, each in (−π/2, π/2).
    pub elevation_angles: Vec<T>,
    pub max_range: T,
    /// Highest point above the ground at which a ray still counts as passing
    /// through a cell.
    pub pass_height: T,
}

impl<T: Real> Default for LidarSpec<T> {
    /// 32 beams uniform in [−30°, +10°], 1024 azimuths, 70 m, mounted at 1.8 m.
    fn default() -> Self {
        let beams = 32;
        let (lo, hi) = (-30.0f64.to_radians(), 10.0f64.to_radians());
        LidarSpec {
            origin: [T::zero(), T::zero(), T::lit(1.8)],
            azimuth_count: 1024,
            elevation_angles: (0..beams)
                .map(|i| T::lit(lo + (hi - lo) * i as f64 / (beams - 1) as f64))
                .collect(),
            max_range: T::lit(70.0),
            pass_height: T::lit(2.0),
        }
    }
}

impl<T: Real> LidarSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.azimuth_count < 8 {
            return Err(Error::InvalidParameter(format!(
                "azimuth_count must be at least 8, got {}",
                self.azimuth_count
            )));
        }
        if !(self.max_range > T::zero()) {
            return Err(Error::InvalidParameter("max_range must be positive".into()));
        }
        if self.elevation_angles.is_empty()
            || self
                .elevation_angles
                .iter()
                .any(|e| !(e.abs() < T::FRAC_PI_2()))
        {
            return Err(Error::InvalidParameter(
                "elevation angles must be non-empty and inside (−π/2, π/2)".into(),
            ));
        }
        Ok(())
    }
}

/// Vertical prism over a convex ground polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle<T> {
    pub footprint: Vec<[T; 2]>,
    pub height: T,
}

impl<T: Real> Obstacle<T> {
    pub fn new(footprint: Vec<[T; 2]>, height: T) -> Result<Self> {
        let o = Obstacle { footprint, height };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height > T::zero()) {
            return Err(Error::InvalidParameter("obstacle height must be positive".into()));
        }
        if self.footprint.len() < 3 || polygon_area2(&self.footprint).abs() <= T::epsilon() {
            return Err(Error::InvalidParameter(
                "obstacle footprint needs three non-collinear vertices".into(),
            ));
        }
        Ok(())
    }

    /// Parameter interval `[t_in, t_out]` (t ≥ 0) over which the 2D ray
    /// `origin + t·dir` lies inside the footprint.
    pub fn ray_interval(&self, origin: [T; 2], dir: [T; 2]) -> Option<(T, T)> {
        convex_clip(&self.footprint, origin, dir, T::zero(), T::infinity())
    }
}

/// Twice the signed area of a polygon.
pub(crate) fn polygon_area2<T: Real>(poly: &[[T; 2]]) -> T {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum()
}

/// Cyrus–Beck clipping of `origin + t·dir`, `t ∈ [t0, t1]`, against a convex polygon.
pub(crate) fn convex_clip<T: Real>(
    poly: &[[T; 2]],
    origin: [T; 2],
    dir: [T; 2],
    mut t0: T,
    mut t1: T,
) -> Option<(T, T)> {
    let orient = polygon_area2(poly).signum();
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        // inward normal
        let e = [b[0] - a[0], b[1] - a[1]];
        let normal = [-e[1] * orient, e[0] * orient];
        let num = normal[0] * (origin[0] - a[0]) + normal[1] * (origin[1] - a[1]);
        let den = normal[0] * dir[0] + normal[1] * dir[1];
        if den == T::zero() {
            if num < T::zero() {
                return None;
            }
            continue;
        }
        let t = -num / den;
        if den > T::zero() {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Cells of `spec` crossed by the 2D segment `p0 → p1` (exact grid traversal).
fn traverse_cells<T: Real>(spec: &GridSpec<T>, p0: [T; 2], p1: [T; 2], mut visit: impl FnMut(usize)) {
    let res = spec.resolution;
    let to_grid = |p: [T; 2]| [(p[0] - spec.lateral_min) / res, (p[1] - spec.longitudinal_min) / res];
    let a = to_grid(p0);
    let b = to_grid(p1);
    let d = [b[0] - a[0], b[1] - a[1]];
    let cols = T::from_usize_lossy(spec.cols);
    let rows = T::from_usize_lossy(spec.rows);
    let box_poly = [[T::zero(), T::zero()], [cols, T::zero()], [cols, rows], [T::zero(), rows]];
    let Some((t0, t1)) = convex_clip(&box_poly, a, d, T::zero(), T::one()) else {
        return;
    };
    let start = [a[0] + d[0] * t0, a[1] + d[1] * t0];
    let clamp_idx = |v: T, n: usize| v.floor().max(T::zero()).to_usize().unwrap_or(0).min(n - 1);
    let mut cx = clamp_idx(start[0], spec.cols);
    let mut cy = clamp_idx(start[1], spec.rows);
    let end = [a[0] + d[0] * t1, a[1] + d[1] * t1];
    let ex = clamp_idx(end[0], spec.cols);
    let ey = clamp_idx(end[1], spec.rows);

    let step_x: isize = if d[0] > T::zero() { 1 } else { -1 };
    let step_y: isize = if d[1] > T::zero() { 1 } else { -1 };
    let next_boundary = |c: usize, step: isize| {
        if step > 0 {
            T::from_usize_lossy(c + 1)
        } else {
            T::from_usize_lossy(c)
        }
    };
    let mut t_max_x = if d[0] == T::zero() {
        T::infinity()
    } else {
        (next_boundary(cx, step_x) - a[0]) / d[0]
    };
    let mut t_max_y = if d[1] == T::zero() {
        T::infinity()
    } else {
        (next_boundary(cy, step_y) - a[1]) / d[1]
    };
    let t_dx = if d[0] == T::zero() { T::infinity() } else { T::one() / d[0].abs() };
    let t_dy = if d[1] == T::zero() { T::infinity() } else { T::one() / d[1].abs() };

    let limit = spec.rows + spec.cols + 2;
    for _ in 0..limit {
        visit(cy * spec.cols + cx);
        if (cx == ex && cy == ey) || (t_max_x > t1 && t_max_y > t1) {
            break;
        }
        if t_max_x < t_max_y {
            let nx = cx as isize + step_x;
            if nx < 0 || nx >= spec.cols as isize {
                break;
            }
            cx = nx as usize;
            t_max_x = t_max_x + t_dx;
        } else {
            let ny = cy as isize + step_y;
            if ny < 0 || ny >= spec.rows as isize {
                break;
            }
            cy = ny as usize;
            t_max_y = t_max_y + t_dy;
        }
    }
}

/// Horizontal distance at which a ray is absorbed, or `None` if it travels
/// through every obstacle.
fn absorption<T: Real>(
    obstacles: &[Obstacle<T>],
    origin: [T; 2],
    dir: [T; 2],
    z0: T,
    slope: T,
) -> Option<T> {
    let mut best: Option<T> = None;
    for ob in obstacles {
        let Some((t_in, t_out)) = ob.ray_interval(origin, dir) else {
            continue;
        };
        let h_in = z0 + slope * t_in;
        let hit = if h_in < ob.height {
            Some(t_in)
        } else if slope < T::zero() {
            // descending through the roof
            let t_roof = (ob.height - z0) / slope;
            (t_roof <= t_out).then_some(t_roof.max(t_in))
        } else {
            None
        };
        if let Some(t) = hit {
            best = Some(best.map_or(t, |b: T| b.min(t)));
        }
    }
    best
}

/// Non-occluded cells of `spec` (true = at least one ray passes through).
pub fn compute_occlusion_mask<T: Real>(
    lidar: &LidarSpec<T>,
    obstacles: &[Obstacle<T>],
    spec: &GridSpec<T>,
) -> Mask {
    let origin = [lidar.origin[0], lidar.origin[1]];
    let z0 = lidar.origin[2];
    let cells = spec.len();
    let passed = (0..lidar.azimuth_count)
        .into_par_iter()
        .fold(
            || vec![false; cells],
            |mut acc, k| {
                let az = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(lidar.azimuth_count);
                let dir = [az.cos(), az.sin()];
                for &el in &lidar.elevation_angles {
                    let slope = el.tan();
                    let mut t_end = lidar.max_range;
                    if slope < T::zero() {
                        t_end = t_end.min(z0 / -slope);
                    }
                    if let Some(t) = absorption(obstacles, origin, dir, z0, slope) {
                        t_end = t_end.min(t);
                    }
                    // part of the ray at or below pass height
                    let (mut t_a, mut t_b) = (T::zero(), t_end);
                    if slope > T::zero() {
                        t_b = t_b.min((lidar.pass_height - z0) / slope);
                    } else if slope < T::zero() && z0 > lidar.pass_height {
                        t_a = (z0 - lidar.pass_height) / -slope;
                    } else if slope == T::zero() && z0 > lidar.pass_height {
                        continue;
                    }
                    if !(t_a <= t_b) {
                        continue;
                    }
                    let p0 = [origin[0] + dir[0] * t_a, origin[1] + dir[1] * t_a];
                    let p1 = [origin[0] + dir[0] * t_b, origin[1] + dir[1] * t_b];
                    traverse_cells(spec, p0, p1, |i| acc[i] = true);
                }
                acc
            },
        )
        .reduce(
            || vec![false; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
                a
            },
        );
    let mut mask = Mask {
        rows: spec.rows,
        cols: spec.cols,
        data: passed,
    };
    let r2 = lidar.max_range * lidar.max_range;
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let [x, y] = spec.cell_center(r, c);
            let (dx, dy) = (x - origin[0], y - origin[1]);
            if dx * dx + dy * dy > r2 {
                mask.set(r, c, false);
            }
        }
    }
    mask
}

/// Cells that are both inside the field of view and non-occluded.
pub fn evaluation_mask(fov: &FovMask, occlusion: &Mask) -> Result<Mask> {
    fov.and(occlusion)
}

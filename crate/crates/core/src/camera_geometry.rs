//! Pinhole cameras, rigid poses and ground-plane homographies.
//!
//! Coordinate conventions:
//! * ego / world frames are right-handed with `x` lateral (right), `y`
//!   longitudinal (forward) and `z` up; the ground is the plane `z = h`
//!   (`h = 0` unless stated otherwise);
//! * camera frames have `x` right, `y` down and `z` along the optical axis;
//! * pixel coordinates are continuous, pixel `(row, col)` has its center at
//!   `(u, v) = (col, row)` and the raster covers `[0, width) × [0, height)`.
//!
//! A [`Pose`] maps camera (or frame ego) coordinates into the reference ego
//! frame: `p_ref = R p + t`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_dense, Mat3, Vec3};
use crate::scalar::Real;

fn orthonormal_tol<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> PinholeCamera<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let cam = PinholeCamera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        let w = T::from_usize_lossy(self.width);
        let h = T::from_usize_lossy(self.height);
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(Error::InvalidParameter(format!(
                "principal point ({}, {}) outside {}x{} raster",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn intrinsic_matrix(&self) -> Mat3<T> {
        let (z, o) = (T::zero(), T::one());
        Mat3([[self.fx, z, self.cx], [z, self.fy, self.cy], [z, z, o]])
    }

    /// True when `(u, v)` lies in `[0, width) × [0, height)`.
    pub fn contains(&self, u: T, v: T) -> bool {
        u >= T::zero()
            && v >= T::zero()
            && u < T::from_usize_lossy(self.width)
            && v < T::from_usize_lossy(self.height)
    }

    /// Projects a point in camera coordinates; `None` for non-positive depth.
    pub fn project(&self, p: &Vec3<T>) -> Option<[T; 2]> {
        if p.z() <= T::zero() {
            return None;
        }
        Some([
            self.fx * p.x() / p.z() + self.cx,
            self.fy * p.y() / p.z() + self.cy,
        ])
    }

    /// Ray direction (camera coordinates, unnormalized) through a pixel.
    pub fn back_project(&self, u: T, v: T) -> Vec3<T> {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, T::one())
    }
}

/// Rigid transform from a source frame into the reference ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        let tol = orthonormal_tol::<T>();
        let err = (rotation.transpose() * rotation - Mat3::identity())
            .0
            .iter()
            .flatten()
            .fold(T::zero(), |m, v| m.max(v.abs()));
        if !(err <= tol) {
            return Err(Error::InvalidParameter(format!(
                "rotation is not orthonormal (max |RᵀR − I| = {err})"
            )));
        }
        let det = rotation.det();
        if !((det - T::one()).abs() <= tol) {
            return Err(Error::InvalidParameter(format!(
                "rotation must have det +1, got {det}"
            )));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    /// Planar ego motion: yaw about `z` (counter-clockwise seen from above),
    /// then translation in the ground plane.
    pub fn planar(x: T, y: T, yaw: T) -> Self {
        let (s, c) = yaw.sin_cos();
        let (z, o) = (T::zero(), T::one());
        Pose {
            rotation: Mat3([[c, -s, z], [s, c, z], [z, z, o]]),
            translation: Vec3::new(x, y, z),
        }
    }

    /// Camera-to-ego mounting transform for a forward-looking camera at
    /// `height` above the ground, pitched down by `pitch` radians.
    pub fn forward_camera(height: T, pitch: T) -> Self {
        let (s, c) = pitch.sin_cos();
        let z = T::zero();
        let x_cam = Vec3::new(T::one(), z, z);
        let z_cam = Vec3::new(z, c, -s);
        let y_cam = z_cam.cross(&x_cam);
        Pose {
            rotation: Mat3::from_cols(x_cam, y_cam, z_cam),
            translation: Vec3::new(z, z, height),
        }
    }

    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Maps a reference-frame point back into the source frame.
    pub fn inverse_transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.transpose().mul_vec(&(*p - self.translation))
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.mul_vec(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose<T> {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -rt.mul_vec(&self.translation),
        }
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.cast(),
            translation: self.translation.cast(),
        }
    }
}

/// Projective map between planes, stored with its projective orientation:
/// for warps produced here the third homogeneous coordinate of `m · (X, Y, 1)`
/// is positive for ground points in front of the camera. Equality of
/// homographies is tested on [`Homography::canonical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography<T> {
    pub m: Mat3<T>,
}

/// Determinant threshold on the unit-Frobenius representative.
pub const SINGULAR_DET: f64 = 1e-12;

impl<T: Real> Homography<T> {
    pub fn new(m: Mat3<T>) -> Result<Self> {
        let h = Homography { m };
        let d = h.normalized_det();
        if !(d.abs() > T::lit(SINGULAR_DET)) {
            return Err(Error::SingularWarp(d.as_f64()));
        }
        Ok(h)
    }

    /// Determinant of `m / ‖m‖_F`, independent of the arbitrary scale.
    pub fn normalized_det(&self) -> T {
        let f = self.m.frobenius();
        if f == T::zero() || !f.is_finite() {
            return T::zero();
        }
        self.m.scale(T::one() / f).det()
    }

    pub fn apply_homogeneous(&self, x: T, y: T) -> Vec3<T> {
        self.m.mul_vec(&Vec3::new(x, y, T::one()))
    }

    /// Maps a point; `None` when the homogeneous coordinate is not positive.
    pub fn apply(&self, x: T, y: T) -> Option<[T; 2]> {
        let p = self.apply_homogeneous(x, y);
        if p.z() <= T::zero() {
            return None;
        }
        Some([p.x() / p.z(), p.y() / p.z()])
    }

    pub fn inverse(&self) -> Result<Homography<T>> {
        let inv = self
            .m
            .inverse()
            .ok_or_else(|| Error::SingularWarp(self.normalized_det().as_f64()))?;
        Homography::new(inv)
    }

    /// Bottom-right entry scaled to one when `|m₃₃| > 1e−9` (relative to the
    /// Frobenius norm), otherwise unit Frobenius norm with a positive first
    /// nonzero entry.
    pub fn canonical(&self) -> Mat3<T> {
        canonicalize(&self.m)
    }

    pub fn canonical_distance(&self, other: &Homography<T>) -> T {
        (self.canonical() - other.canonical()).frobenius()
    }

    pub fn cast<U: Real>(&self) -> Homography<U> {
        Homography { m: self.m.cast() }
    }
}

pub fn canonicalize<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let f = m.frobenius();
    if f == T::zero() {
        return *m;
    }
    let m33 = m[(2, 2)];
    if (m33 / f).abs() > T::lit(1e-9) {
        return m.scale(T::one() / m33);
    }
    let unit = m.scale(T::one() / f);
    let first = unit
        .0
        .iter()
        .flatten()
        .copied()
        .find(|v| *v != T::zero())
        .unwrap_or(T::one());
    if first < T::zero() {
        unit.scale(-T::one())
    } else {
        unit
    }
}

/// One BEV-to-image point correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence<T> {
    /// Ground-plane position in meters (reference ego frame).
    pub bev: [T; 2],
    /// Pixel position.
    pub image: [T; 2],
}

/// Plane-to-image homography of a calibrated camera.
///
/// `pose` maps camera coordinates into the reference ego frame. The result
/// maps ground coordinates `(X, Y)` of the plane `z = plane_height` to
/// pixels, with positive homogeneous depth in front of the camera.
pub fn analytic_ground_homography<T: Real>(
    camera: &PinholeCamera<T>,
    pose: &Pose<T>,
    plane_height: T,
) -> Result<Homography<T>> {
    // p_cam = Rᵀ (p − t) = X r1 + Y r2 + (h r3 − Rᵀ t), r_i = columns of Rᵀ
    let rt = pose.rotation.transpose();
    let offset = rt.col(2).scale(plane_height) - rt.mul_vec(&pose.translation);
    let plane_to_cam = Mat3::from_cols(rt.col(0), rt.col(1), offset);
    let h = Homography {
        m: camera.intrinsic_matrix() * plane_to_cam,
    };
    let d = h.normalized_det();
    if !(d.abs() > T::lit(1e-10)) {
        return Err(Error::DegenerateView(format!(
            "ground plane projects to a line (normalized det {:e})", d.as_f64()
        )));
    }
    Ok(h)
}

/// Pinhole projection of the ground point `(X, Y, 0)`; `None` when it is
/// behind the camera or outside the raster.
pub fn project_ground_to_image<T: Real>(
    camera: &PinholeCamera<T>,
    pose: &Pose<T>,
    ground: [T; 2],
) -> Option<[T; 2]> {
    let p = pose.inverse_transform_point(&Vec3::new(ground[0], ground[1], T::zero()));
    let px = camera.project(&p)?;
    camera.contains(px[0], px[1]).then_some(px)
}

/// Intersection of the pixel's viewing ray with the ground plane `z = 0`;
/// `None` when the ray does not hit the plane in front of the camera.
pub fn project_image_to_ground<T: Real>(
    camera: &PinholeCamera<T>,
    pose: &Pose<T>,
    pixel: [T; 2],
) -> Option<[T; 2]> {
    project_image_to_plane(camera, pose, pixel, T::zero())
}

pub fn project_image_to_plane<T: Real>(
    camera: &PinholeCamera<T>,
    pose: &Pose<T>,
    pixel: [T; 2],
    plane_height: T,
) -> Option<[T; 2]> {
    let dir = pose
        .rotation
        .mul_vec(&camera.back_project(pixel[0], pixel[1]));
    let origin = pose.translation;
    let dz = dir.z();
    if dz.abs() <= T::epsilon() * dir.norm() {
        return None;
    }
    let s = (plane_height - origin.z()) / dz;
    if !(s > T::zero()) || !s.is_finite() {
        return None;
    }
    Some([origin.x() + s * dir.x(), origin.y() + s * dir.y()])
}

/// Row of the horizon at the principal column, or `None` for cameras whose
/// optical axis is vertical.
pub fn horizon_row<T: Real>(camera: &PinholeCamera<T>, pose: &Pose<T>) -> Option<T> {
    // the horizon is where the world-z component of the viewing ray vanishes:
    // r31 (u−cx)/fx + r32 (v−cy)/fy + r33 = 0 at u = cx
    let r = &pose.rotation;
    let r32 = r[(2, 1)];
    if r32.abs() <= T::epsilon() {
        return None;
    }
    Some(camera.cy - r[(2, 2)] * camera.fy / r32)
}

/// Four image anchors below the horizon and their ground positions, used to
/// build warping matrices from correspondences.
pub fn ground_anchor_correspondences<T: Real>(
    camera: &PinholeCamera<T>,
    pose: &Pose<T>,
) -> Result<[Correspondence<T>; 4]> {
    let w = T::from_usize_lossy(camera.width - 1);
    let h = T::from_usize_lossy(camera.height - 1);
    let bottom = h * T::lit(0.95);
    // lowest point of the (possibly tilted) horizon across the raster
    let r = &pose.rotation;
    let horizon = if r[(2, 1)].abs() <= T::epsilon() {
        T::zero()
    } else {
        [T::zero(), w]
            .iter()
            .map(|&u| camera.cy - camera.fy * (r[(2, 2)] + r[(2, 0)] * (u - camera.cx) / camera.fx) / r[(2, 1)])
            .fold(T::zero(), |a, b| a.max(b))
    };
    if horizon >= bottom {
        return Err(Error::DegenerateView(
            "ground is not visible in the lower image".into(),
        ));
    }
    // rows spread the quad from a few meters out to far ground so that a
    // fixed error on the ground side stays small relative to the baseline
    let near = horizon + (bottom - horizon) * T::lit(0.55);
    let far = horizon + (bottom - horizon) * T::lit(0.08);
    let pixels = [
        [w * T::lit(0.1), near],
        [w * T::lit(0.9), near],
        [w * T::lit(0.9), far],
        [w * T::lit(0.1), far],
    ];
    let mut out = [Correspondence {
        bev: [T::zero(); 2],
        image: [T::zero(); 2],
    }; 4];
    for (slot, px) in out.iter_mut().zip(pixels) {
        let bev = project_image_to_ground(camera, pose, px).ok_or_else(|| {
            Error::DegenerateView(format!("anchor pixel {px:?} does not reach the ground"))
        })?;
        *slot = Correspondence { bev, image: px };
    }
    Ok(out)
}

fn triangle_area2<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn check_general_position<T: Real>(pts: &[[T; 2]; 4], side: &str) -> Result<()> {
    let cx = pts.iter().map(|p| p[0]).sum::<T>() / T::lit(4.0);
    let cy = pts.iter().map(|p| p[1]).sum::<T>() / T::lit(4.0);
    let spread2 = pts
        .iter()
        .map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2))
        .sum::<T>();
    if !(spread2 > T::zero()) {
        return Err(Error::DegenerateConfiguration(format!(
            "{side} points coincide"
        )));
    }
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let a = triangle_area2(pts[i], pts[j], pts[k]).abs();
        if a <= T::lit(1e-9) * spread2 {
            return Err(Error::DegenerateConfiguration(format!(
                "{side} points {i}, {j}, {k} are collinear"
            )));
        }
    }
    Ok(())
}

/// Similarity that moves the centroid to the origin and the RMS distance to √2.
fn hartley_normalization<T: Real>(pts: &[[T; 2]; 4]) -> Mat3<T> {
    let n = T::lit(4.0);
    let cx = pts.iter().map(|p| p[0]).sum::<T>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<T>() / n;
    let rms = (pts
        .iter()
        .map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2))
        .sum::<T>()
        / n)
        .sqrt();
    let s = T::SQRT_2() / rms;
    let z = T::zero();
    Mat3([[s, z, -s * cx], [z, s, -s * cy], [z, z, T::one()]])
}

fn apply_affine<T: Real>(m: &Mat3<T>, p: [T; 2]) -> [T; 2] {
    let v = m.mul_vec(&Vec3::new(p[0], p[1], T::one()));
    [v.x(), v.y()]
}

/// Exact homography through four BEV → image correspondences (normalized
/// 8-unknown linear system). The result is oriented so that the inputs have
/// positive homogeneous depth.
pub fn homography_from_correspondences<T: Real>(
    pairs: &[Correspondence<T>; 4],
) -> Result<Homography<T>> {
    let bev = pairs.map(|p| p.bev);
    let img = pairs.map(|p| p.image);
    check_general_position(&bev, "bev")?;
    check_general_position(&img, "image")?;

    let tb = hartley_normalization(&bev);
    let ti = hartley_normalization(&img);
    let mut a = Vec::with_capacity(8);
    let mut b = Vec::with_capacity(8);
    for (pb, pi) in bev.iter().zip(img.iter()) {
        let [x, y] = apply_affine(&tb, *pb);
        let [u, v] = apply_affine(&ti, *pi);
        let (z, o) = (T::zero(), T::one());
        a.push(vec![x, y, o, z, z, z, -u * x, -u * y]);
        b.push(u);
        a.push(vec![z, z, z, x, y, o, -v * x, -v * y]);
        b.push(v);
    }
    let h = solve_dense(a, b, T::lit(1e-10)).ok_or_else(|| {
        Error::DegenerateConfiguration("correspondence system is rank deficient".into())
    })?;
    let hn = Mat3([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], T::one()]]);
    let ti_inv = ti
        .inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("image normalization".into()))?;
    let mut m = ti_inv * hn * tb;
    let orientation: T = bev
        .iter()
        .map(|p| m.mul_vec(&Vec3::new(p[0], p[1], T::one())).z().signum())
        .sum();
    if orientation < T::zero() {
        m = m.scale(-T::one());
    }
    Homography::new(m).map_err(|_| {
        Error::DegenerateConfiguration("recovered homography is singular".into())
    })
}

/// As [`homography_from_correspondences`] with image points given in
/// homogeneous coordinates.
pub fn homography_from_homogeneous<T: Real>(
    bev: &[[T; 2]; 4],
    image: &[[T; 3]; 4],
) -> Result<Homography<T>> {
    let mut pairs = [Correspondence {
        bev: [T::zero(); 2],
        image: [T::zero(); 2],
    }; 4];
    for (slot, (b, i)) in pairs.iter_mut().zip(bev.iter().zip(image.iter())) {
        if i[2] == T::zero() {
            return Err(Error::DegenerateConfiguration(
                "image point at infinity".into(),
            ));
        }
        *slot = Correspondence {
            bev: *b,
            image: [i[0] / i[2], i[1] / i[2]],
        };
    }
    homography_from_correspondences(&pairs)
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `std` meters to
/// both coordinates of every BEV point. Image points are left untouched.
///
/// Draws are `std · z` with `z` from one seeded standard-normal stream, so
/// the same seed perturbs the points in the same directions at every `std`.
pub fn perturb_correspondences<T: Real>(
    pairs: &[Correspondence<T>],
    std: T,
    seed: u64,
) -> Vec<Correspondence<T>> {
    if std == T::zero() {
        return pairs.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs
        .iter()
        .map(|p| {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            Correspondence {
                bev: [p.bev[0] + std * T::lit(dx), p.bev[1] + std * T::lit(dy)],
                image: p.image,
            }
        })
        .collect()
}

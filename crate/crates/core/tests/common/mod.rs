//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempbev::bev_grid::{GridSpec, Mask};
use tempbev::camera_geometry::{PinholeCamera, Pose};
use tempbev::linalg::{Mat3, Vec3};
use tempbev::model::{focal_loss, Activation, Lattice};
use tempbev::occlusion::{LidarSpec, Obstacle};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn camera() -> PinholeCamera<f64> {
    PinholeCamera::new(256.0, 256.0, 256.0, 128.0, 512, 256).unwrap()
}

fn rot_x(a: f64) -> Mat3<f64> {
    let (s, c) = a.sin_cos();
    Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

fn rot_y(a: f64) -> Mat3<f64> {
    let (s, c) = a.sin_cos();
    Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

fn rot_z(a: f64) -> Mat3<f64> {
    let (s, c) = a.sin_cos();
    Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

/// Camera above the ground looking down by 5..35 degrees with small roll,
/// arbitrary yaw and position.
pub fn random_camera_pose(r: &mut ChaCha8Rng) -> Pose<f64> {
    // camera axes in a level, forward-looking ego: x right, y down (−z), z forward (+y)
    let level = Mat3::from_cols(
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(0.0, 1.0, 0.0),
    );
    let pitch = r.gen_range(5.0f64..35.0).to_radians();
    let roll = r.gen_range(-5.0f64..5.0).to_radians();
    let yaw = r.gen_range(-3.1..3.1);
    let rot = rot_z(yaw) * rot_x(-pitch) * rot_y(roll) * level;
    let t = Vec3::new(r.gen_range(-20.0..20.0), r.gen_range(-20.0..20.0), r.gen_range(1.0..3.0));
    Pose::new(rot, t).unwrap()
}

/// Projection through the full 3D chain: world → camera → pixel.
pub fn project_chain(cam: &PinholeCamera<f64>, pose: &Pose<f64>, g: [f64; 2]) -> Option<[f64; 2]> {
    let rt = pose.rotation.transpose();
    let d = Vec3::new(g[0], g[1], 0.0) - pose.translation;
    let p = rt.mul_vec(&d);
    if p.z() <= 0.0 {
        return None;
    }
    Some([cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy])
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn activate(z: &Lattice<f64>, act: Activation) -> Lattice<f64> {
    let mut out = z.clone();
    for i in 0..z.cells {
        let c = out.cell_mut(i);
        match act {
            Activation::Sigmoid => c.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                let m = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = c.iter().map(|v| (v - m).exp()).sum();
                c.iter_mut().for_each(|v| *v = (*v - m).exp() / s);
            }
        }
    }
    out
}

/// Central differences of the focal loss with respect to the logits.
pub fn focal_fd(
    z: &Lattice<f64>,
    y: &Lattice<f64>,
    mask: &[bool],
    act: Activation,
    gamma: f64,
    alpha: &[f64],
    h: f64,
) -> Vec<f64> {
    let loss = |z: &Lattice<f64>| focal_loss(&activate(z, act), y, mask, act, gamma, alpha).unwrap().loss;
    (0..z.data.len())
        .map(|k| {
            let mut a = z.clone();
            let mut b = z.clone();
            a.data[k] += h;
            b.data[k] -= h;
            (loss(&a) - loss(&b)) / (2.0 * h)
        })
        .collect()
}

/// Visibility by dense marching: angular resolution multiplied by
/// `factor` in azimuth and elevation, steps of `resolution / 8`.
pub fn ray_march_mask(lidar: &LidarSpec<f64>, obstacles: &[Obstacle<f64>], spec: &GridSpec<f64>, factor: usize) -> Mask {
    let mut mask = Mask::for_spec(spec, false);
    let azimuths = lidar.azimuth_count * factor;
    let els = &lidar.elevation_angles;
    let mut elevations = Vec::new();
    for w in els.windows(2) {
        for k in 0..factor {
            elevations.push(w[0] + (w[1] - w[0]) * k as f64 / factor as f64);
        }
    }
    elevations.push(*els.last().unwrap());
    let [ox, oy, oz] = lidar.origin;
    let step = spec.resolution / 8.0;
    let inside = |poly: &[[f64; 2]], p: [f64; 2]| {
        let n = poly.len();
        let mut sign = 0.0f64;
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let c = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            if c != 0.0 {
                if sign != 0.0 && c.signum() != sign {
                    return false;
                }
                sign = c.signum();
            }
        }
        true
    };
    for k in 0..azimuths {
        let az = std::f64::consts::TAU * k as f64 / azimuths as f64;
        let (dx, dy) = (az.cos(), az.sin());
        for &el in &elevations {
            let slope = el.tan();
            let mut t = 0.0;
            while t <= lidar.max_range {
                let z = oz + slope * t;
                if z < 0.0 {
                    break;
                }
                let p = [ox + dx * t, oy + dy * t];
                if obstacles.iter().any(|o| z <= o.height && inside(&o.footprint, p)) {
                    break;
                }
                if z <= lidar.pass_height {
                    if let Some((r, c)) = spec.world_to_cell(p) {
                        mask.set(r, c, true);
                    }
                }
                t += step;
            }
        }
    }
    let r2 = lidar.max_range * lidar.max_range;
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let [x, y] = spec.cell_center(r, c);
            if (x - ox).powi(2) + (y - oy).powi(2) > r2 {
                mask.set(r, c, false);
            }
        }
    }
    mask
}

/// Brute-force IoU with the empty-union convention.
pub fn iou_count(pred: &[bool], gt: &[bool], mask: &[bool]) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for i in 0..pred.len() {
        if mask[i] {
            inter += (pred[i] && gt[i]) as usize;
            union += (pred[i] || gt[i]) as usize;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

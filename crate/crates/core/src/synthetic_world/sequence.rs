use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera_geometry::{PinholeCamera, Pose};
use crate::error::{Error, Result};
use crate::warping::ImageRaster;

use super::render::render_image;
use super::scene::Scene;
use super::texture::Texture;

/// Forward camera mounted on the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub mount_height: f64,
    /// Downward pitch in degrees.
    pub pitch_deg: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig {
            width: 512,
            height: 256,
            fx: 256.0,
            fy: 256.0,
            cx: 256.0,
            cy: 128.0,
            mount_height: 1.5,
            pitch_deg: 5.0,
        }
    }
}

impl CameraRig {
    pub fn camera(&self) -> Result<PinholeCamera<f64>> {
        PinholeCamera::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    /// Camera-to-ego transform.
    pub fn mount(&self) -> Pose<f64> {
        Pose::forward_camera(self.mount_height, self.pitch_deg.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        self.camera()?;
        if !(self.mount_height > 0.0) || !(self.pitch_deg > -89.0 && self.pitch_deg < 89.0) {
            return Err(Error::InvalidParameter("camera must sit above the ground".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub step: usize,
    pub timestamp: f64,
    /// Frame ego to reference ego.
    pub ego_pose: Pose<f64>,
    /// Camera to reference ego.
    pub camera_pose: Pose<f64>,
    pub image: ImageRaster<f64>,
}

/// Trajectory steps of `frames` frames spaced by `interval`, with frame
/// `reference_index` at `reference_step`.
pub fn sequence_steps(
    available: usize,
    reference_step: usize,
    frames: usize,
    interval: usize,
    reference_index: usize,
) -> Result<Vec<usize>> {
    if frames == 0 || interval == 0 || reference_index >= frames {
        return Err(Error::InvalidParameter(format!(
            "sequence needs frames ≥ 1, interval ≥ 1 and a reference inside it (got {frames}, {interval}, {reference_index})"
        )));
    }
    let first = reference_step as i64 - (reference_index * interval) as i64;
    let last = reference_step + (frames - 1 - reference_index) * interval;
    if first < 0 || last >= available {
        return Err(Error::TrajectoryTooShort {
            needed: (frames - 1) * interval + 1,
            available,
        });
    }
    Ok((0..frames).map(|n| first as usize + n * interval).collect())
}

/// Frame-ego to reference-ego pose.
pub fn relative_pose(scene: &Scene, step: usize, reference_step: usize) -> Pose<f64> {
    scene.ego_pose(reference_step).inverse().compose(&scene.ego_pose(step))
}

pub fn render_frame(scene: &Scene, texture: &Texture, rig: &CameraRig, step: usize, reference_step: usize) -> Result<Frame> {
    let camera = rig.camera()?;
    let mount = rig.mount();
    let t = scene.timestamp(step);
    let world = scene.ego_pose(step).compose(&mount);
    let ego_pose = relative_pose(scene, step, reference_step);
    Ok(Frame {
        index: 0,
        step,
        timestamp: t,
        ego_pose,
        camera_pose: ego_pose.compose(&mount),
        image: render_image(scene, texture, &camera, &world, t),
    })
}

pub fn make_sequence(
    scene: &Scene,
    rig: &CameraRig,
    reference_step: usize,
    frames: usize,
    interval: usize,
    reference_index: usize,
) -> Result<Vec<Frame>> {
    let steps = sequence_steps(scene.steps(), reference_step, frames, interval, reference_index)?;
    let texture = Texture::new(scene);
    steps
        .iter()
        .enumerate()
        .map(|(n, &s)| {
            let mut f = render_frame(scene, &texture, rig, s, reference_step)?;
            f.index = n;
            Ok(f)
        })
        .collect()
}

/// Uniform draw from an inclusive interval range, as used for training
/// sequences.
pub fn random_interval(range: [usize; 2], seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).gen_range(range[0].min(range[1])..=range[1].max(range[0]))
}

use std::collections::BTreeMap;
use std::sync::Mutex;

use crate::bev_grid::{crop_to_target, extend_for_frames, make_target_grid, BevGrid, ExtendedGridSpec, GridSpec, Mask};
use crate::camera_geometry::{PinholeCamera, Pose};
use crate::config::{MaskMode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::io::{dequantize, quantize};
use crate::occlusion::{compute_occlusion_mask, evaluation_mask};
use crate::synthetic_world::{
    bev_labels, generate_scene, mix64, relative_pose, render_image, sequence_steps, Scene, Texture,
};
use crate::warping::{fov_mask, ImageRaster};

pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base ^ mix64(index.wrapping_add(0x5eed)))
}

/// One scene with its reference step, ground truth and masks.
pub struct Sample {
    pub index: usize,
    pub scene: Scene,
    pub reference_step: usize,
    pub camera: PinholeCamera<f64>,
    pub mount: Pose<f64>,
    pub target: GridSpec<f64>,
    /// Labels on a lattice covering every camera footprint of the window.
    pub labels: BevGrid<f64>,
    pub target_labels: BevGrid<f64>,
    /// Union of the dataset sequence's fields of view on the target grid.
    pub fov: Mask,
    pub occlusion: Mask,
    /// Dataset sequence steps.
    pub steps: Vec<usize>,
    frames: Mutex<BTreeMap<usize, Vec<u8>>>,
}

impl Sample {
    pub fn build(config: &ScenarioConfig, index: usize, scene: Scene) -> Result<Sample> {
        let camera = config.camera.camera()?;
        let mount = config.camera.mount();
        let target: GridSpec<f64> = make_target_grid(&config.grid)?;
        let reference_step = config.reference_step();
        let seq = &config.sequence;
        let steps = sequence_steps(scene.steps(), reference_step, seq.frames, seq.interval, seq.reference_index())?;
        let train_span = (seq.train_frames - 1) * seq.train_interval[1];
        let lo = steps[0].min(reference_step.saturating_sub(train_span));
        let hi = *steps.last().unwrap();
        let pose = |s: usize| relative_pose(&scene, s, reference_step).compose(&mount);
        let views: Vec<_> = (lo..=hi).map(|s| (camera, pose(s))).collect();
        let label_grid = extend_for_frames(&target, &views, config.extended_range);
        let labels = bev_labels(
            &scene,
            &scene.ego_pose(reference_step),
            label_grid,
            scene.timestamp(reference_step),
        )?;
        let mut fov = Mask::for_spec(&target, false);
        for &s in &steps {
            fov = fov.or(&fov_mask(&camera, &pose(s), &target))?;
        }
        let lidar = config.lidar.spec()?;
        let obstacles = scene.obstacles_in(&scene.ego_pose(reference_step));
        let occlusion = compute_occlusion_mask(&lidar, &obstacles, &target);
        Sample::from_parts(config, index, scene, labels, fov, occlusion)
    }

    /// Assembles a sample from stored ground truth.
    pub fn from_parts(
        config: &ScenarioConfig,
        index: usize,
        scene: Scene,
        labels: BevGrid<f64>,
        fov: Mask,
        occlusion: Mask,
    ) -> Result<Sample> {
        let camera = config.camera.camera()?;
        let mount = config.camera.mount();
        let target: GridSpec<f64> = make_target_grid(&config.grid)?;
        let reference_step = config.reference_step();
        let seq = &config.sequence;
        let steps = sequence_steps(scene.steps(), reference_step, seq.frames, seq.interval, seq.reference_index())?;
        let target_labels = crop_to_target(&labels);
        let shape_ok = *target_labels.spec() == target
            && target_labels.channels == target.classes.total()
            && fov.rows == target.rows
            && fov.cols == target.cols
            && fov.same_shape(&occlusion);
        if !shape_ok {
            return Err(Error::ShapeMismatch("stored ground truth does not match the target grid".into()));
        }
        Ok(Sample {
            index,
            scene,
            reference_step,
            camera,
            mount,
            target,
            labels,
            target_labels,
            fov,
            occlusion,
            steps,
            frames: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn label_grid(&self) -> ExtendedGridSpec<f64> {
        match self.labels.layout {
            crate::bev_grid::Layout::Extended(e) => e,
            crate::bev_grid::Layout::Target(t) => ExtendedGridSpec::identity(t),
        }
    }

    /// Camera-to-reference-ego pose at a trajectory step.
    pub fn camera_pose(&self, step: usize) -> Pose<f64> {
        relative_pose(&self.scene, step, self.reference_step).compose(&self.mount)
    }

    pub fn mask(&self, mode: MaskMode) -> Result<Mask> {
        match mode {
            MaskMode::Fov => Ok(self.fov.clone()),
            MaskMode::Occlusion => evaluation_mask(&self.fov, &self.occlusion),
        }
    }

    /// Stores an 8-bit frame, e.g. one read back from disk.
    pub fn insert_frame(&self, step: usize, image: &ImageRaster<f64>) {
        let bytes = image.data.iter().map(|&v| quantize(v)).collect();
        self.frames.lock().unwrap().insert(step, bytes);
    }

    /// Rendered frame at `step`, quantized to 8 bits; cached.
    pub fn frame(&self, step: usize) -> Result<ImageRaster<f64>> {
        if step >= self.scene.steps() {
            return Err(Error::TrajectoryTooShort {
                needed: step + 1,
                available: self.scene.steps(),
            });
        }
        let cached = self.frames.lock().unwrap().get(&step).cloned();
        let bytes = match cached {
            Some(b) => b,
            None => {
                let world = self.scene.ego_pose(step).compose(&self.mount);
                let texture = Texture::new(&self.scene);
                let img = render_image(&self.scene, &texture, &self.camera, &world, self.scene.timestamp(step));
                let b: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
                self.frames.lock().unwrap().insert(step, b.clone());
                b
            }
        };
        ImageRaster::from_data(
            self.camera.height,
            self.camera.width,
            3,
            bytes.into_iter().map(dequantize).collect(),
        )
    }

    /// Drops cached frames.
    pub fn clear_frames(&self) {
        self.frames.lock().unwrap().clear();
    }
}

/// Scenes and ground truth for `config.scene_count` samples drawn from `seed`.
pub fn build_samples(config: &ScenarioConfig, seed: u64) -> Result<Vec<Sample>> {
    (0..config.scene_count)
        .map(|i| {
            let scene = generate_scene(derive_seed(seed, i as u64), &config.scene)?;
            Sample::build(config, i, scene)
        })
        .collect()
}

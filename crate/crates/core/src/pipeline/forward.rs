use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bev_grid::{crop_to_target, extend_for_frames, BevGrid, ClassLayout, ExtendedGridSpec, Mask};
use crate::camera_geometry::{
    ground_anchor_correspondences, homography_from_correspondences, perturb_correspondences, Homography,
    PinholeCamera, Pose,
};
use crate::config::{Components, ScenarioConfig};
use crate::error::{Error, Result};
use crate::model::{extract_features, Activation, FeatureExtractorConfig, Lattice, LinearHead};
use crate::synthetic_world::sequence_steps;
use crate::warping::{
    aggregate, apply_mask, assemble_features, fov_mask_from_homography, warp_to_bev, AggregationMode, ImageRaster,
};

use super::sample::{derive_seed, Sample};

/// Trained heads plus what is needed to rebuild their inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub features: FeatureExtractorConfig,
    pub components: Components,
    pub classes: ClassLayout,
    pub image_static: Option<LinearHead<f64>>,
    pub image_object: Option<LinearHead<f64>>,
    pub bev_static: Option<LinearHead<f64>>,
    pub bev_object: Option<LinearHead<f64>>,
}

impl Model {
    /// Small Gaussian weights seeded from the training seed.
    pub fn init(config: &ScenarioConfig) -> Model {
        let f = config.features.channels;
        let classes = config.grid.classes;
        let (cs, co) = (classes.static_classes, classes.object_classes + 1);
        let c = config.components;
        let std = config.train.init_std;
        let seed = config.train.seed;
        let head = |i, o, a, k| LinearHead::random(i, o, a, std, derive_seed(seed, k));
        let bev_in = 2 * f + if c.image_branch { cs + co } else { 0 };
        Model {
            features: config.features,
            components: c,
            classes,
            image_static: c.image_branch.then(|| head(f, cs, Activation::Sigmoid, 1)),
            image_object: c.image_branch.then(|| head(f, co, Activation::Softmax, 2)),
            bev_static: c.bev_branch.then(|| head(bev_in, cs, Activation::Sigmoid, 3)),
            bev_object: c.bev_branch.then(|| head(bev_in, co, Activation::Softmax, 4)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.components.validate()?;
        let c = self.components;
        let f = self.features.channels;
        let (cs, co) = (self.classes.static_classes, self.classes.object_classes + 1);
        let bev_in = 2 * f + if c.image_branch { cs + co } else { 0 };
        let expect = [
            (&self.image_static, c.image_branch, f, cs),
            (&self.image_object, c.image_branch, f, co),
            (&self.bev_static, c.bev_branch, bev_in, cs),
            (&self.bev_object, c.bev_branch, bev_in, co),
        ];
        for (head, on, i, o) in expect {
            match head {
                Some(h) if on && h.inputs == i && h.outputs == o => h.validate()?,
                None if !on => {}
                _ => return Err(Error::ShapeMismatch("model heads do not match its components".into())),
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("model", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Model = serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))?;
        m.validate()?;
        Ok(m)
    }
}

/// Which frames feed one prediction, and how the warps are disturbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub frames: usize,
    pub interval: usize,
    pub reference_index: usize,
    pub noise_std: f64,
    pub noise_seed: u64,
}

impl Selection {
    /// Evaluation sequence of the config; a model without the temporal
    /// component sees the reference frame only.
    pub fn evaluation(config: &ScenarioConfig, components: Components) -> Selection {
        let s = &config.sequence;
        let mut sel = Selection {
            frames: s.frames,
            interval: s.interval,
            reference_index: s.reference_index(),
            noise_std: config.eval.noise_std,
            noise_seed: config.eval.noise_seed,
        };
        if !components.temporal {
            sel.frames = 1;
            sel.reference_index = 0;
        }
        sel
    }
}

/// Ground-to-image warp estimated from four anchor correspondences whose
/// ground side carries Gaussian noise. `None` when the noisy points are
/// degenerate.
pub fn frame_warp(camera: &PinholeCamera<f64>, pose: &Pose<f64>, noise_std: f64, seed: u64) -> Option<Homography<f64>> {
    let anchors = ground_anchor_correspondences(camera, pose).ok()?;
    let noisy = perturb_correspondences(&anchors, noise_std, seed);
    let pts: [_; 4] = noisy.try_into().ok()?;
    homography_from_correspondences(&pts).ok()
}

pub(crate) struct FrameInput {
    pub features: ImageRaster<f64>,
    pub warp: Option<Homography<f64>>,
    pub fov: Mask,
    pub warped: BevGrid<f64>,
}

pub(crate) struct PreparedSequence {
    pub ext: ExtendedGridSpec<f64>,
    pub frames: Vec<FrameInput>,
    pub reference_index: usize,
}

pub(crate) fn prepare_sequence(
    sample: &Sample,
    features: &FeatureExtractorConfig,
    extended_range: f64,
    sel: &Selection,
) -> Result<PreparedSequence> {
    let steps = sequence_steps(
        sample.scene.steps(),
        sample.reference_step,
        sel.frames,
        sel.interval,
        sel.reference_index,
    )?;
    let cam = sample.camera;
    let views: Vec<_> = steps.iter().map(|&s| (cam, sample.camera_pose(s))).collect();
    let ext = extend_for_frames(&sample.target, &views, extended_range);
    let frames = steps
        .iter()
        .zip(&views)
        .map(|(&s, (_, pose))| {
            let feats = extract_features(&sample.frame(s)?, features)?;
            let seed = derive_seed(sel.noise_seed ^ sample.scene.seed, s as u64);
            let warp = frame_warp(&cam, pose, sel.noise_std, seed);
            let (fov, warped) = match &warp {
                Some(h) => (
                    fov_mask_from_homography(h, cam.width, cam.height, &ext.grid),
                    warp_to_bev(h, &feats, ext)?,
                ),
                None => (Mask::for_spec(&ext.grid, false), BevGrid::new(ext, feats.channels)),
            };
            Ok(FrameInput {
                features: feats,
                warp,
                fov,
                warped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSequence {
        ext,
        frames,
        reference_index: sel.reference_index,
    })
}

/// Per-pixel head output warped onto the extended grid.
pub(crate) fn warped_heatmap(
    head: &LinearHead<f64>,
    frame: &FrameInput,
    ext: ExtendedGridSpec<f64>,
) -> Result<BevGrid<f64>> {
    let probs = head.predict(&Lattice::from_raster(&frame.features))?;
    match &frame.warp {
        Some(h) => {
            let f = &frame.features;
            let raster = ImageRaster::from_data(f.height, f.width, head.outputs, probs.data)?;
            warp_to_bev(h, &raster, ext)
        }
        None => Ok(BevGrid::new(ext, head.outputs)),
    }
}

/// Target-grid probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub static_probs: Lattice<f64>,
    pub object_probs: Lattice<f64>,
}

pub(crate) fn bev_inputs(model: &Model, seq: &PreparedSequence) -> Result<Lattice<f64>> {
    let masks: Vec<&Mask> = seq.frames.iter().map(|f| &f.fov).collect();
    let feats: Vec<&BevGrid<f64>> = seq.frames.iter().map(|f| &f.warped).collect();
    let r = seq.reference_index;
    let assembled = match (&model.image_static, &model.image_object) {
        (Some(hs), Some(ho)) => {
            let statics = seq
                .frames
                .iter()
                .map(|f| warped_heatmap(hs, f, seq.ext))
                .collect::<Result<Vec<_>>>()?;
            let obj = warped_heatmap(ho, &seq.frames[r], seq.ext)?;
            let srefs: Vec<_> = statics.iter().collect();
            assemble_features(Some(&obj), &srefs, &feats, &masks, r)?
        }
        _ => assemble_features(None, &[], &feats, &masks, r)?,
    };
    Ok(Lattice::from_grid(&crop_to_target(&assembled.grid)))
}

pub fn predict_sample(model: &Model, config: &ScenarioConfig, sample: &Sample, sel: &Selection) -> Result<Predictions> {
    let seq = prepare_sequence(sample, &model.features, config.extended_range, sel)?;
    predict_prepared(model, &seq)
}

pub(crate) fn predict_prepared(model: &Model, seq: &PreparedSequence) -> Result<Predictions> {
    if let (Some(bs), Some(bo)) = (&model.bev_static, &model.bev_object) {
        let x = bev_inputs(model, seq)?;
        return Ok(Predictions {
            static_probs: bs.predict(&x)?,
            object_probs: bo.predict(&x)?,
        });
    }
    // image branch only: warped heatmaps, static ones averaged over frames
    let (hs, ho) = match (&model.image_static, &model.image_object) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::ShapeMismatch("model has no usable heads".into())),
    };
    let masks: Vec<&Mask> = seq.frames.iter().map(|f| &f.fov).collect();
    let statics = seq
        .frames
        .iter()
        .map(|f| warped_heatmap(hs, f, seq.ext))
        .collect::<Result<Vec<_>>>()?;
    let srefs: Vec<_> = statics.iter().collect();
    let mean = aggregate(&srefs, &masks, AggregationMode::Mean)?;
    let r = seq.reference_index;
    let obj = apply_mask(&warped_heatmap(ho, &seq.frames[r], seq.ext)?, masks[r])?;
    Ok(Predictions {
        static_probs: Lattice::from_grid(&crop_to_target(&mean)),
        object_probs: Lattice::from_grid(&crop_to_target(&obj)),
    })
}

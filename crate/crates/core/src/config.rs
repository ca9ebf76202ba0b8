//! Scenario configuration, stored as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bev_grid::GridConfig;
use crate::error::{Error, Result};
use crate::model::{FeatureExtractorConfig, Optimizer, OptimizerKind};
use crate::occlusion::LidarSpec;
use crate::synthetic_world::{CameraRig, SceneParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceConfig {
    /// Frames per evaluation sequence.
    pub frames: usize,
    /// Trajectory steps between consecutive frames.
    pub interval: usize,
    /// Position of the reference frame in the sequence; defaults to the last.
    pub reference_index: Option<usize>,
    /// Trajectory step of the reference frame; defaults to the last step.
    pub reference_step: Option<usize>,
    pub train_frames: usize,
    /// Inclusive range the training interval is drawn from, per sequence.
    pub train_interval: [usize; 2],
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            frames: 5,
            interval: 3,
            reference_index: None,
            reference_step: None,
            train_frames: 4,
            train_interval: [1, 3],
        }
    }
}

impl SequenceConfig {
    pub fn reference_index(&self) -> usize {
        self.reference_index.unwrap_or(self.frames.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub mount_height: f64,
    pub beams: usize,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub azimuths: usize,
    pub max_range: f64,
    pub pass_height: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig {
            mount_height: 1.8,
            beams: 32,
            min_elevation_deg: -30.0,
            max_elevation_deg: 10.0,
            azimuths: 1024,
            max_range: 70.0,
            pass_height: 2.0,
        }
    }
}

impl LidarConfig {
    pub fn spec(&self) -> Result<LidarSpec<f64>> {
        if self.beams == 0 {
            return Err(Error::InvalidParameter("lidar needs at least one beam".into()));
        }
        let (lo, hi) = (self.min_elevation_deg.to_radians(), self.max_elevation_deg.to_radians());
        let spec = LidarSpec {
            origin: [0.0, 0.0, self.mount_height],
            azimuth_count: self.azimuths,
            elevation_angles: (0..self.beams)
                .map(|i| {
                    if self.beams == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (self.beams - 1) as f64
                    }
                })
                .collect(),
            max_range: self.max_range,
            pass_height: self.pass_height,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Components {
    pub image_branch: bool,
    pub bev_branch: bool,
    pub temporal: bool,
}

impl Default for Components {
    fn default() -> Self {
        Components {
            image_branch: true,
            bev_branch: true,
            temporal: true,
        }
    }
}

impl Components {
    /// The six valid toggle combinations, in ablation order.
    pub const ROWS: [Components; 6] = [
        Components { image_branch: true, bev_branch: false, temporal: false },
        Components { image_branch: true, bev_branch: false, temporal: true },
        Components { image_branch: false, bev_branch: true, temporal: false },
        Components { image_branch: false, bev_branch: true, temporal: true },
        Components { image_branch: true, bev_branch: true, temporal: false },
        Components { image_branch: true, bev_branch: true, temporal: true },
    ];

    pub fn validate(&self) -> Result<()> {
        if !self.image_branch && !self.bev_branch {
            return Err(Error::InvalidParameter("at least one of the image and BEV branches is needed".into()));
        }
        Ok(())
    }

    /// Parses a comma-separated subset of `img`, `bev`, `temp`.
    pub fn parse(s: &str) -> Result<Components> {
        let mut c = Components {
            image_branch: false,
            bev_branch: false,
            temporal: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "img" | "image" => c.image_branch = true,
                "bev" => c.bev_branch = true,
                "temp" | "temporal" => c.temporal = true,
                other => return Err(Error::InvalidParameter(format!("unknown component {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.image_branch {
            parts.push("img");
        }
        if self.bev_branch {
            parts.push("bev");
        }
        if self.temporal {
            parts.push("temp");
        }
        parts.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Per-class weights; derived from class frequencies when absent.
    pub static_alpha: Option<Vec<f64>>,
    pub object_alpha: Option<Vec<f64>>,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    /// Sequences per update; 0 uses all of them.
    pub batch: usize,
    pub seed: u64,
    /// Weights of the image static, image object and BEV losses.
    pub loss_weights: [f64; 3],
    /// Image-level supervision uses every `pixel_stride`-th row and column.
    pub pixel_stride: usize,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 2.0,
            static_alpha: None,
            object_alpha: None,
            learning_rate: 0.05,
            optimizer: OptimizerKind::Adam,
            epochs: 80,
            batch: 0,
            seed: 0,
            loss_weights: [1.0, 1.0, 1.0],
            pixel_stride: 2,
            init_std: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be ≥ 0, got {}", self.gamma)));
        }
        for a in self.static_alpha.iter().chain(&self.object_alpha).flatten() {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(Error::InvalidParameter(format!("alpha values must lie in (0, 1), got {a}")));
            }
        }
        if self.pixel_stride == 0 || self.loss_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("pixel stride and loss weights must be positive".into()));
        }
        self.optimizer().validate()
    }

    pub fn optimizer(&self) -> Optimizer {
        Optimizer {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            ..Optimizer::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Field of view and LIDAR visibility.
    #[default]
    Occlusion,
    /// Every cell in the field of view.
    Fov,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "occlusion" => Ok(MaskMode::Occlusion),
            "fov" => Ok(MaskMode::Fov),
            _ => Err(Error::InvalidParameter(format!("mask must be occlusion or fov, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub mask: MaskMode,
    /// Standard deviation of the BEV correspondence noise, meters.
    pub noise_std: f64,
    pub noise_seed: u64,
    pub static_threshold: f64,
    /// Scenes for held-out evaluation in ablations are drawn from this seed.
    pub eval_seed: Option<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mask: MaskMode::Occlusion,
            noise_std: 0.0,
            noise_seed: 0,
            static_threshold: 0.5,
            eval_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub scene_count: usize,
    pub scene: SceneParams,
    pub camera: CameraRig,
    pub sequence: SequenceConfig,
    pub grid: GridConfig,
    /// Radius around each camera that the extended grid must cover.
    pub extended_range: f64,
    pub lidar: LidarConfig,
    pub features: FeatureExtractorConfig,
    pub train: TrainConfig,
    pub components: Components,
    pub eval: EvalConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            scene_count: 10,
            scene: SceneParams::default(),
            camera: CameraRig::default(),
            sequence: SequenceConfig::default(),
            grid: GridConfig::default(),
            extended_range: 55.0,
            lidar: LidarConfig::default(),
            features: FeatureExtractorConfig::default(),
            train: TrainConfig::default(),
            components: Components::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.camera.validate()?;
        self.features.validate()?;
        self.train.validate()?;
        self.components.validate()?;
        self.lidar.spec()?;
        crate::bev_grid::make_target_grid::<f64>(&self.grid)?;
        let s = &self.sequence;
        if s.frames == 0 || s.interval == 0 || s.train_frames == 0 || s.train_interval[0] == 0 {
            return Err(Error::InvalidParameter("frame counts and intervals must be at least 1".into()));
        }
        if s.train_interval[0] > s.train_interval[1] {
            return Err(Error::InvalidParameter("training interval range must be ordered".into()));
        }
        if s.reference_index() >= s.frames {
            return Err(Error::InvalidParameter("reference index must lie inside the sequence".into()));
        }
        if self.scene_count == 0 {
            return Err(Error::InvalidParameter("scene_count must be at least 1".into()));
        }
        if !(self.extended_range > 0.0) || !(self.eval.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("extended range must be positive and noise non-negative".into()));
        }
        Ok(())
    }

    pub fn reference_step(&self) -> usize {
        self.sequence
            .reference_step
            .unwrap_or(self.scene.trajectory_steps.saturating_sub(1))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("scenario", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

//! Run configuration: one JSON file describes the dataset, every network,
//! the loss weights, and the training/evaluation schedule, so a run is
//! reproducible from the file and a seed alone.

use crate::error::{Error, Result};
use crate::fuse::{ContrastiveConfig, PoolConfig};
use crate::loss::LossWeights;
use crate::mvs::{DepthHypotheses, MvsConfig, FEATURE_STRIDE};
use crate::refine::RefineConfig;
use crate::voxel::GridGeometry;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Primitive shapes the dataset generator can emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Box,
    Icosphere,
    Cylinder,
    TwoBox,
}

/// Synthetic dataset layout: scene count and variety, camera rig, and
/// image resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scenes: usize,
    pub views: usize,
    pub image_size: usize,
    pub kinds: Vec<SceneKind>,
    /// Distance of every camera from the origin.
    pub camera_radius: f64,
    /// Focal length as a multiple of the image width.
    pub focal_scale: f64,
    /// Ground-truth surface samples stored per scene.
    pub gt_samples: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            scenes: 8,
            views: 3,
            image_size: 64,
            kinds: vec![
                SceneKind::Box,
                SceneKind::Icosphere,
                SceneKind::Cylinder,
                SceneKind::TwoBox,
            ],
            camera_radius: 0.7,
            focal_scale: 1.4,
            gt_samples: 512,
        }
    }
}

/// Voxel lattice shared by the fusion grid and the occupancy targets. The
/// world grid is centered on the origin; the camera-local grid shares dims
/// and spacing but starts `local_z_near` in front of the camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dims: [usize; 3],
    pub spacing: f32,
    pub local_z_near: f32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dims: [16, 16, 16],
            spacing: 0.0375,
            local_z_near: 0.4,
        }
    }
}

impl GridConfig {
    /// Origin-centered world lattice.
    pub fn world_geometry(&self) -> Result<GridGeometry> {
        let origin = [
            -(self.dims[0] as f32) * self.spacing / 2.0,
            -(self.dims[1] as f32) * self.spacing / 2.0,
            -(self.dims[2] as f32) * self.spacing / 2.0,
        ];
        GridGeometry::new(self.dims, origin, self.spacing)
    }

    /// Camera-frame lattice used by the per-view occupancy head: centered
    /// in x/y, starting at `local_z_near` along the optical axis.
    pub fn local_geometry(&self) -> Result<GridGeometry> {
        let origin = [
            -(self.dims[0] as f32) * self.spacing / 2.0,
            -(self.dims[1] as f32) * self.spacing / 2.0,
            self.local_z_near,
        ];
        GridGeometry::new(self.dims, origin, self.spacing)
    }
}

/// Occupancy head encoder: output channels of each stride-2 stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoxelHeadConfig {
    pub encoder_channels: Vec<usize>,
}

impl Default for VoxelHeadConfig {
    fn default() -> Self {
        VoxelHeadConfig {
            encoder_channels: vec![16, 32],
        }
    }
}

/// Depth hypothesis ladder for plane-sweep stereo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisConfig {
    pub d_min: f64,
    pub step: f64,
    pub count: usize,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        HypothesisConfig {
            d_min: 0.4,
            step: 0.05,
            count: 13,
        }
    }
}

impl HypothesisConfig {
    pub fn build(&self) -> Result<DepthHypotheses> {
        DepthHypotheses::new(self.d_min, self.step, self.count)
    }
}

/// Mesh initialization and reconstruction policy flags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// Skip the voxel branch for initialization and start from a sphere.
    pub sphere_init: bool,
    /// Feed dataset ground-truth depths instead of network predictions.
    pub use_gt_depth: bool,
    pub cubify_threshold: f64,
    pub sphere_radius: f32,
    pub sphere_subdivisions: usize,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            sphere_init: false,
            use_gt_depth: false,
            cubify_threshold: 0.5,
            sphere_radius: 0.2,
            sphere_subdivisions: 2,
        }
    }
}

/// Two-phase training schedule and optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Depth-network pretraining steps.
    pub phase1_steps: u64,
    /// Full-model steps with the depth network frozen.
    pub phase2_steps: u64,
    pub learning_rate: f32,
    /// Surface samples drawn from each predicted mesh per step.
    pub mesh_samples: usize,
    pub checkpoint_every: u64,
    /// Average mesh losses over stages instead of summing them.
    pub average_stages: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase1_steps: 60,
            phase2_steps: 300,
            learning_rate: 1e-3,
            mesh_samples: 160,
            checkpoint_every: 100,
            average_stages: false,
        }
    }
}

/// Evaluation protocol: which checkpoints to score and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: String,
    /// Optional second checkpoint trained with the edge term; scored side
    /// by side and labeled in the report.
    pub pretty_checkpoint: Option<String>,
    /// Override the number of views fed to reconstruction.
    pub views: Option<usize>,
    pub sample_count: usize,
    pub seed: u64,
    /// Squared-distance threshold in square meters.
    pub tau: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            checkpoint: "checkpoint.mvmc".into(),
            pretty_checkpoint: None,
            views: None,
            sample_count: 400,
            seed: 7,
            tau: 1e-4,
        }
    }
}

/// Everything a run needs beyond the CLI's seed and output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Directory holding (or receiving) the generated dataset.
    pub data_dir: String,
    /// Scene index used by predict, render-depth, and fuse-voxels.
    pub scene_index: usize,
    pub dataset: DatasetConfig,
    pub grid: GridConfig,
    pub voxel: VoxelHeadConfig,
    pub mvs: MvsConfig,
    pub hypotheses: HypothesisConfig,
    pub contrastive: ContrastiveConfig,
    pub pooling: PoolConfig,
    pub refine: RefineConfig,
    pub loss: LossWeights,
    pub reconstruction: ReconstructionConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            data_dir: "data".into(),
            scene_index: 0,
            dataset: DatasetConfig::default(),
            grid: GridConfig::default(),
            voxel: VoxelHeadConfig::default(),
            mvs: MvsConfig::default(),
            hypotheses: HypothesisConfig::default(),
            contrastive: ContrastiveConfig::default(),
            pooling: PoolConfig::default(),
            refine: RefineConfig::default(),
            loss: LossWeights::default(),
            reconstruction: ReconstructionConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Cross-field consistency checks. Field-level range checks live with
    /// the constructors that consume each section.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.scenes == 0 || d.views == 0 {
            return Err(Error::Config("dataset needs scenes >= 1 and views >= 1".into()));
        }
        if d.kinds.is_empty() {
            return Err(Error::Config("dataset needs at least one scene kind".into()));
        }
        if !(d.camera_radius > 0.0) || !(d.focal_scale > 0.0) {
            return Err(Error::Config(
                "camera radius and focal scale must be positive".into(),
            ));
        }
        if d.gt_samples == 0 {
            return Err(Error::Config("gt_samples must be positive".into()));
        }

        if d.image_size % FEATURE_STRIDE != 0 {
            return Err(Error::Config(format!(
                "image size {} is not divisible by the depth-feature stride {FEATURE_STRIDE}",
                d.image_size
            )));
        }
        let stages = self.voxel.encoder_channels.len() as u32;
        let footprint = d.image_size >> stages;
        if footprint << stages != d.image_size {
            return Err(Error::Config(format!(
                "image size {} is not divisible by 2^{stages} voxel encoder stages",
                d.image_size
            )));
        }
        if footprint != self.grid.dims[0] || footprint != self.grid.dims[1] {
            return Err(Error::Config(format!(
                "voxel encoder maps {0}x{0} images to a {footprint}x{footprint} footprint, \
                 but the grid is {1}x{2} in (x,y)",
                d.image_size, self.grid.dims[0], self.grid.dims[1]
            )));
        }
        self.grid.world_geometry()?;
        self.grid.local_geometry()?;

        if !self.reconstruction.use_gt_depth && d.views < 2 {
            return Err(Error::Config(
                "depth estimation needs at least 2 views; enable use_gt_depth for single-view runs"
                    .into(),
            ));
        }
        if !(0.0..1.0).contains(&self.reconstruction.cubify_threshold) {
            return Err(Error::Config(format!(
                "cubify threshold must be in [0,1), got {}",
                self.reconstruction.cubify_threshold
            )));
        }
        if !(self.reconstruction.sphere_radius > 0.0) {
            return Err(Error::Config("sphere radius must be positive".into()));
        }

        self.hypotheses.build()?;
        self.loss.validate()?;
        if !(self.train.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.train.mesh_samples == 0 {
            return Err(Error::Config("mesh_samples must be positive".into()));
        }
        if self.train.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        if self.eval.sample_count == 0 {
            return Err(Error::Config("eval sample_count must be positive".into()));
        }
        if !(self.eval.tau > 0.0) {
            return Err(Error::Config("eval tau must be positive".into()));
        }
        if let Some(v) = self.eval.views {
            if v == 0 || v > d.views {
                return Err(Error::Config(format!(
                    "eval view override {v} outside 1..={}",
                    d.views
                )));
            }
            if !self.reconstruction.use_gt_depth && v < 2 {
                return Err(Error::Config(
                    "eval view override below 2 requires use_gt_depth".into(),
                ));
            }
        }
        Ok(())
    }
}

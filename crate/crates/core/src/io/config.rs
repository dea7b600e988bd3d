use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost_volume::{make_planes, DepthPlanes, FeatureMode, DEFAULT_D_MAX, DEFAULT_D_MIN, DEFAULT_N_PLANES};
use crate::losses::LossWeights;
use crate::optim::{Ablation, AdamConfig, CostVolumeSettings, FreeSet, LrScales, SequenceProblem, SolveOptions};
use crate::scenes::{constant_motion, Scene, SceneGeometry, TextureSpec};
use crate::{Error, Intrinsics, PixelGrid, PoseSE3, Result, Tensor};

/// Camera path of a synthetic sequence, as world-to-camera poses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// `frames` poses, each one `motion` further than the previous.
    ConstantMotion { frames: usize, motion: PoseSE3 },
    Explicit { poses: Vec<PoseSE3> },
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::ConstantMotion {
            frames: 4,
            motion: PoseSE3::new([0.0, 0.02, 0.01], [0.08, 0.02, -0.05]),
        }
    }
}

impl TrajectorySpec {
    pub fn poses(&self) -> Vec<PoseSE3> {
        match self {
            TrajectorySpec::ConstantMotion { frames, motion } => constant_motion(*frames, motion),
            TrajectorySpec::Explicit { poses } => poses.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsConfig {
    pub ground_truth: Intrinsics,
    /// Starting point when intrinsics are optimized.
    pub init: Intrinsics,
}

impl Default for IntrinsicsConfig {
    fn default() -> Self {
        Self {
            ground_truth: Intrinsics {
                fx: 0.82,
                fy: 1.02,
                cx: 0.5,
                cy: 0.5,
            },
            init: Intrinsics {
                fx: 1.0,
                fy: 1.0,
                cx: 0.5,
                cy: 0.5,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostVolumeConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub n_planes: usize,
    pub feature_mode: FeatureMode,
    /// Number of preceding frames used as sources for each target.
    pub past_frames: usize,
    /// Softmin temperature of the differentiable argmin.
    pub temperature: f64,
}

impl Default for CostVolumeConfig {
    fn default() -> Self {
        Self {
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            n_planes: DEFAULT_N_PLANES,
            feature_mode: FeatureMode::Identity,
            past_frames: 1,
            temperature: 1e-3,
        }
    }
}

impl CostVolumeConfig {
    pub fn planes(&self) -> Result<DepthPlanes> {
        make_planes(self.d_min, self.d_max, self.n_planes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    /// Steps per schedule epoch; `steps / 20` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps_per_epoch: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub grad_tolerance: f64,
    /// Constant initial depth for every target frame.
    pub depth_init: f64,
    pub depth_jitter: f64,
    pub lr_scales: LrScales,
    /// Also optimize a brightness calibration image per target.
    pub calibration: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let solve = SolveOptions::default();
        Self {
            lr: solve.lr,
            steps: solve.steps,
            seed: solve.seed,
            steps_per_epoch: None,
            beta1: solve.adam.beta1,
            beta2: solve.adam.beta2,
            epsilon: solve.adam.epsilon,
            grad_tolerance: solve.grad_tolerance,
            depth_init: 1.0,
            depth_jitter: 0.0,
            lr_scales: LrScales::default(),
            calibration: false,
        }
    }
}

impl OptimizerConfig {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            steps: self.steps,
            lr: self.lr,
            seed: self.seed,
            steps_per_epoch: self.steps_per_epoch,
            lr_scales: self.lr_scales,
            adam: AdamConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            grad_tolerance: self.grad_tolerance,
            depth_jitter: self.depth_jitter,
        }
    }
}

/// Everything needed to reproduce a synthesis / recovery run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scene")]
    pub scene: Scene,
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub grid: PixelGrid,
    #[serde(default)]
    pub intrinsics: IntrinsicsConfig,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub cost_volume: CostVolumeConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_scene() -> Scene {
    Scene::new(
        SceneGeometry::SlantedPlane {
            depth: 3.0,
            normal: [0.2, 0.1, 1.0],
        },
        TextureSpec::default(),
    )
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: default_scene(),
            trajectory: TrajectorySpec::default(),
            grid: PixelGrid::default(),
            intrinsics: IntrinsicsConfig::default(),
            loss: LossWeights::default(),
            cost_volume: CostVolumeConfig::default(),
            optimizer: OptimizerConfig::default(),
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Joint depth and pose recovery over `frames` for one ablation arm.
    /// `given` are the intrinsics the baseline arm is frozen at; the other
    /// arms start from `intrinsics.init`.
    pub fn sequence_problem(&self, frames: Vec<Tensor>, ablation: Ablation, given: Intrinsics) -> Result<SequenceProblem> {
        let (intrinsics_init, free_intrinsics) = match ablation {
            Ablation::Baseline => (given, false),
            Ablation::Camera | Ablation::CameraCostVolume => (self.intrinsics.init, true),
        };
        let cost_volume = match ablation {
            Ablation::CameraCostVolume => Some(CostVolumeSettings {
                planes: self.cost_volume.planes()?,
                feature_mode: self.cost_volume.feature_mode,
                temperature: self.cost_volume.temperature,
            }),
            _ => None,
        };
        Ok(SequenceProblem {
            frames,
            past_frames: self.cost_volume.past_frames,
            depth_init: self.optimizer.depth_init,
            intrinsics_init,
            free: FreeSet {
                depth: true,
                pose: true,
                intrinsics: free_intrinsics,
                calibration: self.optimizer.calibration,
            },
            weights: self.loss,
            cost_volume,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |key: &str, e: Error| Error::Config(format!("{key}: {e}"));
        PixelGrid::new(self.grid.width, self.grid.height).map_err(|e| cfg("grid", e))?;
        self.scene.validate().map_err(|e| cfg("scene", e))?;
        self.intrinsics.ground_truth.validate().map_err(|e| cfg("intrinsics.ground_truth", e))?;
        self.intrinsics.init.validate().map_err(|e| cfg("intrinsics.init", e))?;
        self.loss.validate().map_err(|e| cfg("loss", e))?;
        self.cost_volume.planes().map_err(|e| cfg("cost_volume", e))?;
        if self.cost_volume.past_frames == 0 {
            return Err(Error::Config("cost_volume.past_frames: must be at least 1".into()));
        }
        if !(self.cost_volume.temperature > 0.0) {
            return Err(Error::Config("cost_volume.temperature: must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || o.steps == 0 {
            return Err(Error::Config("optimizer: lr and steps must be positive".into()));
        }
        if !(o.depth_init > 0.0) {
            return Err(Error::Config("optimizer.depth_init: must be positive".into()));
        }
        if self.trajectory.poses().is_empty() {
            return Err(Error::Config("trajectory: needs at least one pose".into()));
        }
        Ok(())
    }
}

//! Adam, the step-decay schedule and direct recovery of depth, ego-motion,
//! intrinsics and brightness calibration by minimizing the total loss.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost_volume::{argmin_depth, build_cost_volume, extract_features, ArgminMode, DepthPlanes, FeatureMode};
use crate::losses::{total_loss, LossBreakdown, LossWeights, SourceAggregation, SupervisionInputs};
use crate::sampling::synthesize_target;
use crate::{Error, Graph, Intrinsics, PoseSE3, Result, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            config,
        }
    }
}

/// One bias-corrected Adam update of every parameter in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len(), state.m.len()],
        });
    }
    if !(lr > 0.0) {
        return Err(Error::InvalidParameter(format!("learning rate must be positive, got {lr}")));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    let AdamConfig { beta1, beta2, epsilon } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].zip_map(g, |m, g| beta1 * m + (1.0 - beta1) * g)?;
        let v = state.v[i].zip_map(g, |v, g| beta2 * v + (1.0 - beta2) * g * g)?;
        let step = m.zip_map(&v, |m, v| lr * (m / c1) / ((v / c2).sqrt() + epsilon))?;
        *p = p.zip_map(&step, |p, s| p - s)?;
        state.m[i] = m;
        state.v[i] = v;
    }
    Ok(())
}

/// `base * 0.1^floor(epoch / 10)`.
pub fn lr_schedule(base_lr: f64, epoch: usize) -> f64 {
    base_lr * 0.1f64.powi((epoch / 10) as i32)
}

/// One target frame and the source frames that reconstruct it.
#[derive(Clone, Debug)]
pub struct FramePair {
    pub target: Tensor,
    pub sources: Vec<Tensor>,
    /// `H x W` weights in `[0, 1]`; out-of-view pixels are always excluded.
    pub visibility: Option<Tensor>,
    /// Flow-reconstructed target for the auxiliary term.
    pub flow_synthesized: Option<Tensor>,
}

impl FramePair {
    pub fn new(target: Tensor, source: Tensor) -> Self {
        Self {
            target,
            sources: vec![source],
            visibility: None,
            flow_synthesized: None,
        }
    }
}

/// Starting values; frozen variables keep them throughout.
#[derive(Clone, Debug)]
pub struct InitialValues {
    /// One `H x W` depth map per pair.
    pub depths: Vec<Tensor>,
    /// Per pair, one target-to-source pose per source.
    pub poses: Vec<Vec<PoseSE3>>,
    pub intrinsics: Intrinsics,
    /// One calibration image per pair; zeros when absent.
    pub calibrations: Option<Vec<Tensor>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreeSet {
    pub depth: bool,
    pub pose: bool,
    pub intrinsics: bool,
    pub calibration: bool,
}

impl FreeSet {
    pub fn any(&self) -> bool {
        self.depth || self.pose || self.intrinsics || self.calibration
    }
}

/// Plane-sweep supervision: the free depth is pulled towards the soft
/// argmin of a cost volume built from the current poses and intrinsics.
#[derive(Clone, Debug)]
pub struct CostVolumeSettings {
    pub planes: DepthPlanes,
    pub feature_mode: FeatureMode,
    pub temperature: f64,
}

#[derive(Clone, Debug)]
pub struct RecoveryProblem {
    pub pairs: Vec<FramePair>,
    pub init: InitialValues,
    pub free: FreeSet,
    pub weights: LossWeights,
    pub aggregation: SourceAggregation,
    pub cost_volume: Option<CostVolumeSettings>,
}

/// Learning-rate multipliers per variable group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrScales {
    pub depth: f64,
    pub pose: f64,
    pub intrinsics: f64,
    pub calibration: f64,
}

impl Default for LrScales {
    fn default() -> Self {
        Self {
            depth: 1.0,
            pose: 1.0,
            intrinsics: 1.0,
            calibration: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Steps per schedule epoch; the rate drops 10x every 10 epochs.
    /// Defaults to `steps / 20`, i.e. 20 epochs per solve.
    pub steps_per_epoch: Option<usize>,
    pub lr_scales: LrScales,
    pub adam: AdamConfig,
    /// Stop when the gradient norm over free variables falls below this.
    pub grad_tolerance: f64,
    /// Relative multiplicative noise on the initial depth, drawn from `seed`.
    pub depth_jitter: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 1e-2,
            seed: 0,
            steps_per_epoch: None,
            lr_scales: LrScales::default(),
            adam: AdamConfig::default(),
            grad_tolerance: 1e-8,
            depth_jitter: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub lr: f64,
    /// Loss terms averaged over pairs.
    pub breakdown: LossBreakdown,
    /// Intrinsics soft-bound penalty.
    pub penalty: f64,
    /// Objective actually minimized: mean total plus penalty.
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxSteps,
}

#[derive(Clone, Debug)]
pub struct RecoveryResult {
    pub depths: Vec<Tensor>,
    pub poses: Vec<Vec<PoseSE3>>,
    pub intrinsics: Intrinsics,
    pub calibrations: Option<Vec<Tensor>>,
    pub trace: Vec<TraceRow>,
    pub status: SolveStatus,
    pub warnings: Vec<String>,
}

impl RecoveryResult {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.objective)
    }
}

pub const ZERO_PARALLAX_WARNING: &str = "intrinsics unobservable: zero parallax";

const FOCAL_BOUNDS: (f64, f64) = (0.1, 3.0);
const PRINCIPAL_BOUNDS: (f64, f64) = (0.1, 0.9);
const BOUND_WEIGHT: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Group {
    Depth,
    Pose,
    Intrinsics,
    Calibration,
}

/// Flat parameter list: per pair `[log-depth, poses.., calibration?]`,
/// then the shared intrinsics.
struct Layout {
    groups: Vec<Group>,
    pair_offsets: Vec<usize>,
    has_calibration: bool,
}

impl RecoveryProblem {
    fn check(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Usage("recovery needs at least one frame pair".into()));
        }
        if !self.free.any() {
            return Err(Error::Usage("recovery needs at least one free variable".into()));
        }
        self.weights.validate()?;
        self.init.intrinsics.validate()?;
        let n = self.pairs.len();
        if self.init.depths.len() != n || self.init.poses.len() != n {
            return Err(Error::Usage(format!(
                "initial values cover {} depths and {} pose sets for {n} pairs",
                self.init.depths.len(),
                self.init.poses.len()
            )));
        }
        for (i, pair) in self.pairs.iter().enumerate() {
            let shape = pair.target.shape();
            if shape.len() != 3 || pair.sources.is_empty() {
                return Err(Error::Usage(format!("pair {i} needs an H x W x C target and at least one source")));
            }
            if self.init.poses[i].len() != pair.sources.len() {
                return Err(Error::Usage(format!("pair {i}: one initial pose per source required")));
            }
            if self.init.depths[i].shape() != &shape[..2] {
                return Err(Error::ShapeMismatch {
                    op: "initial depth",
                    lhs: shape[..2].to_vec(),
                    rhs: self.init.depths[i].shape().to_vec(),
                });
            }
            if self.init.depths[i].data().iter().any(|&d| d <= 0.0) {
                return Err(Error::domain("initial depth", format!("pair {i} has non-positive depth")));
            }
        }
        if let Some(c) = &self.init.calibrations {
            if c.len() != n {
                return Err(Error::Usage("one calibration image per pair required".into()));
            }
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let has_calibration = self.free.calibration || self.init.calibrations.is_some();
        let mut groups = Vec::new();
        let mut pair_offsets = Vec::new();
        for pair in &self.pairs {
            pair_offsets.push(groups.len());
            groups.push(Group::Depth);
            groups.extend(std::iter::repeat_n(Group::Pose, pair.sources.len()));
            if has_calibration {
                groups.push(Group::Calibration);
            }
        }
        groups.push(Group::Intrinsics);
        Layout {
            groups,
            pair_offsets,
            has_calibration,
        }
    }

    fn initial_params(&self, layout: &Layout, jitter: f64, seed: u64) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layout.groups.len());
        for (i, pair) in self.pairs.iter().enumerate() {
            let log_depth = self.init.depths[i].map(|d| d.ln());
            let log_depth = if jitter > 0.0 {
                let noise: Vec<f64> = (0..log_depth.len()).map(|_| rng.gen_range(-jitter..jitter)).collect();
                let noise = Tensor::new(log_depth.shape(), noise).expect("same shape");
                log_depth.zip_map(&noise, |l, n| l + (1.0 + n).ln()).expect("same shape")
            } else {
                log_depth
            };
            params.push(log_depth);
            params.extend(self.init.poses[i].iter().map(PoseSE3::to_tensor));
            if layout.has_calibration {
                let c = match &self.init.calibrations {
                    Some(c) => c[i].clone(),
                    None => Tensor::zeros(pair.target.shape()),
                };
                params.push(c);
            }
        }
        params.push(self.init.intrinsics.to_tensor());
        params
    }

    fn is_free(&self, g: Group) -> bool {
        match g {
            Group::Depth => self.free.depth,
            Group::Pose => self.free.pose,
            Group::Intrinsics => self.free.intrinsics,
            Group::Calibration => self.free.calibration,
        }
    }

    fn zero_parallax(&self) -> bool {
        let data_static = self.pairs.iter().all(|p| p.sources.iter().all(|s| *s == p.target));
        let frozen_static = !self.free.pose
            && self
                .init
                .poses
                .iter()
                .flatten()
                .all(|p| p.translation_vector().norm() == 0.0);
        data_static || frozen_static
    }
}

/// Precomputed per-pair features for the cost volume.
struct Features {
    target: Tensor,
    sources: Vec<Tensor>,
}

struct Evaluation {
    breakdown: LossBreakdown,
    penalty: f64,
    objective: f64,
    grads: Vec<Tensor>,
}

fn bound_penalty<'g>(intr: Var<'g>) -> Result<Var<'g>> {
    let g = intr.graph();
    let lo = Tensor::from_vec(vec![FOCAL_BOUNDS.0, FOCAL_BOUNDS.0, PRINCIPAL_BOUNDS.0, PRINCIPAL_BOUNDS.0]);
    let hi = Tensor::from_vec(vec![FOCAL_BOUNDS.1, FOCAL_BOUNDS.1, PRINCIPAL_BOUNDS.1, PRINCIPAL_BOUNDS.1]);
    // x - clamp(x) is zero inside the box and linear outside it.
    let below = g.constant(lo).sub(intr)?.maximum(g.scalar(0.0))?;
    let above = intr.sub(g.constant(hi))?.maximum(g.scalar(0.0))?;
    below.square()?.add(above.square()?)?.sum()?.mul_scalar(BOUND_WEIGHT)
}

fn evaluate(
    problem: &RecoveryProblem,
    layout: &Layout,
    features: &[Features],
    params: &[Tensor],
) -> Result<Evaluation> {
    let g = Graph::new();
    let vars: Vec<Var<'_>> = params
        .iter()
        .zip(&layout.groups)
        .map(|(p, &grp)| {
            if problem.is_free(grp) {
                g.param(p.clone())
            } else {
                g.constant(p.clone())
            }
        })
        .collect();
    let intr = *vars.last().expect("intrinsics present");
    let mut sum: Option<Var<'_>> = None;
    let mut breakdown = LossBreakdown::default();
    let n = problem.pairs.len() as f64;
    for (i, pair) in problem.pairs.iter().enumerate() {
        let base = layout.pair_offsets[i];
        let depth = vars[base].exp()?;
        let poses = &vars[base + 1..base + 1 + pair.sources.len()];
        let calibration = layout.has_calibration.then(|| vars[base + 1 + pair.sources.len()]);
        let views = pair
            .sources
            .iter()
            .zip(poses)
            .map(|(s, &p)| synthesize_target(g.constant(s.clone()), depth, p, intr))
            .collect::<Result<Vec<_>>>()?;
        let inp = SupervisionInputs {
            target: g.constant(pair.target.clone()),
            synthesized: views,
            flow_synthesized: pair.flow_synthesized.as_ref().map(|f| g.constant(f.clone())),
            calibration,
            visibility: pair.visibility.clone(),
            aggregation: problem.aggregation,
        };
        let cv_depth = match &problem.cost_volume {
            Some(cv) => {
                let f = &features[i];
                let sources: Vec<_> = f.sources.iter().zip(poses).map(|(s, &p)| (g.constant(s.clone()), p)).collect();
                let vol = build_cost_volume(g.constant(f.target.clone()), &sources, intr, &cv.planes)?;
                Some(argmin_depth(
                    &vol,
                    &cv.planes,
                    ArgminMode::Soft {
                        temperature: cv.temperature,
                    },
                )?)
            }
            None => None,
        };
        let (loss, b) = total_loss(&inp, depth, cv_depth, &problem.weights)?;
        breakdown.data += b.data / n;
        breakdown.residual_smoothness += b.residual_smoothness / n;
        breakdown.auxiliary += b.auxiliary / n;
        breakdown.edge_smoothness += b.edge_smoothness / n;
        breakdown.consistency += b.consistency / n;
        breakdown.total += b.total / n;
        sum = Some(match sum {
            Some(s) => s.add(loss)?,
            None => loss,
        });
    }
    let mut objective = sum.expect("non-empty").mul_scalar(1.0 / n)?;
    let mut penalty = 0.0;
    if problem.free.intrinsics {
        let p = bound_penalty(intr)?;
        penalty = p.value().item();
        objective = objective.add(p)?;
    }
    let free: Vec<Var<'_>> = vars
        .iter()
        .zip(&layout.groups)
        .filter(|(_, &grp)| problem.is_free(grp))
        .map(|(v, _)| *v)
        .collect();
    let grads = g.backward(objective, &free)?;
    let grads = vars
        .iter()
        .zip(&layout.groups)
        .map(|(v, &grp)| {
            if problem.is_free(grp) {
                grads.get(*v).cloned().expect("requested")
            } else {
                Tensor::zeros(&v.shape())
            }
        })
        .collect();
    Ok(Evaluation {
        breakdown,
        penalty,
        objective: objective.value().item(),
        grads,
    })
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => Error::Diverged {
            step,
            reason: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

/// Minimizes the mean total loss over all pairs (plus the intrinsics
/// soft-bound penalty when intrinsics are free) with Adam.
pub fn solve(problem: &RecoveryProblem, options: &SolveOptions) -> Result<RecoveryResult> {
    problem.check()?;
    if options.steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    let mut warnings = Vec::new();
    if problem.free.intrinsics && problem.zero_parallax() {
        warn!("{ZERO_PARALLAX_WARNING}");
        warnings.push(ZERO_PARALLAX_WARNING.to_string());
    }
    let layout = problem.layout();
    let features: Vec<Features> = match &problem.cost_volume {
        Some(cv) => problem
            .pairs
            .iter()
            .map(|p| {
                Ok(Features {
                    target: extract_features(&p.target, cv.feature_mode)?,
                    sources: p
                        .sources
                        .iter()
                        .map(|s| extract_features(s, cv.feature_mode))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let mut params = problem.initial_params(&layout, options.depth_jitter, options.seed);
    let free_idx: Vec<usize> = (0..params.len()).filter(|&i| problem.is_free(layout.groups[i])).collect();
    let scale_of = |grp: Group| match grp {
        Group::Depth => options.lr_scales.depth,
        Group::Pose => options.lr_scales.pose,
        Group::Intrinsics => options.lr_scales.intrinsics,
        Group::Calibration => options.lr_scales.calibration,
    };
    // One Adam state per free parameter so each can carry its own rate.
    let mut states: Vec<AdamState> = free_idx
        .iter()
        .map(|&i| AdamState::new(std::slice::from_ref(&params[i]), options.adam))
        .collect();
    let per_epoch = options.steps_per_epoch.unwrap_or((options.steps / 20).max(1)).max(1);

    let mut trace = Vec::with_capacity(options.steps + 1);
    let mut status = SolveStatus::MaxSteps;
    for step in 0..=options.steps {
        let eval = evaluate(problem, &layout, &features, &params).map_err(|e| diverged(step, e))?;
        if !eval.objective.is_finite() {
            return Err(Error::Diverged {
                step,
                reason: "non-finite objective".into(),
            });
        }
        let grad_norm = free_idx
            .iter()
            .map(|&i| eval.grads[i].data().iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let lr = lr_schedule(options.lr, step / per_epoch);
        trace.push(TraceRow {
            step,
            lr,
            breakdown: eval.breakdown,
            penalty: eval.penalty,
            objective: eval.objective,
            grad_norm,
        });
        if step % 100 == 0 {
            debug!("step {step}: objective {:.6e}, |g| {grad_norm:.3e}", eval.objective);
        }
        if grad_norm < options.grad_tolerance {
            status = SolveStatus::Converged;
            break;
        }
        if step == options.steps {
            break;
        }
        for (state, &i) in states.iter_mut().zip(&free_idx) {
            let rate = lr * scale_of(layout.groups[i]);
            adam_step(
                std::slice::from_mut(&mut params[i]),
                std::slice::from_ref(&eval.grads[i]),
                state,
                rate,
            )?;
            if !params[i].all_finite() {
                return Err(Error::Diverged {
                    step,
                    reason: "non-finite parameter after update".into(),
                });
            }
        }
    }

    let mut depths = Vec::new();
    let mut poses = Vec::new();
    let mut calibrations = layout.has_calibration.then(Vec::new);
    for (i, pair) in problem.pairs.iter().enumerate() {
        let base = layout.pair_offsets[i];
        depths.push(params[base].map(f64::exp));
        poses.push(
            (0..pair.sources.len())
                .map(|s| PoseSE3::from_tensor(&params[base + 1 + s]))
                .collect::<Result<Vec<_>>>()?,
        );
        if let Some(c) = calibrations.as_mut() {
            c.push(params[base + 1 + pair.sources.len()].clone());
        }
    }
    let intrinsics = Intrinsics::from_tensor(params.last().expect("intrinsics"))?;
    Ok(RecoveryResult {
        depths,
        poses,
        intrinsics,
        calibrations,
        trace,
        status,
        warnings,
    })
}

/// The three comparison arms of joint recovery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    /// Intrinsics frozen at given values.
    #[serde(rename = "baseline")]
    Baseline,
    /// Intrinsics optimized, no cost volume.
    #[serde(rename = "camera")]
    Camera,
    /// Intrinsics optimized with cost-volume depth consistency.
    #[serde(rename = "camera+costvolume")]
    CameraCostVolume,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Baseline, Ablation::Camera, Ablation::CameraCostVolume];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::Camera => "camera",
            Ablation::CameraCostVolume => "camera+costvolume",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown ablation {s:?}; expected baseline, camera or camera+costvolume")))
    }
}

/// Recovery over a frame sequence. Every frame after the first is a target
/// reconstructed from up to `past_frames` preceding frames; all pairs share
/// one intrinsics variable.
#[derive(Clone, Debug)]
pub struct SequenceProblem {
    pub frames: Vec<Tensor>,
    pub past_frames: usize,
    pub depth_init: f64,
    pub intrinsics_init: Intrinsics,
    pub free: FreeSet,
    pub weights: LossWeights,
    pub cost_volume: Option<CostVolumeSettings>,
}

/// Pair `k` has target frame `k + 1`; its sources are frames `k, k - 1, ..`
/// and its poses map the target to each of them.
pub fn sequence_problem(seq: &SequenceProblem) -> Result<RecoveryProblem> {
    if seq.frames.len() < 3 {
        return Err(Error::Usage(format!(
            "sequence recovery needs at least 3 frames, got {}",
            seq.frames.len()
        )));
    }
    if seq.past_frames == 0 {
        return Err(Error::InvalidParameter("past_frames must be at least 1".into()));
    }
    if !(seq.depth_init > 0.0) {
        return Err(Error::InvalidParameter(format!("initial depth must be positive, got {}", seq.depth_init)));
    }
    let pairs: Vec<FramePair> = (1..seq.frames.len())
        .map(|t| FramePair {
            target: seq.frames[t].clone(),
            sources: (1..=seq.past_frames.min(t)).map(|j| seq.frames[t - j].clone()).collect(),
            visibility: None,
            flow_synthesized: None,
        })
        .collect();
    let hw = &seq.frames[0].shape()[..2];
    let init = InitialValues {
        depths: vec![Tensor::full(hw, seq.depth_init); pairs.len()],
        poses: pairs.iter().map(|p| vec![PoseSE3::identity(); p.sources.len()]).collect(),
        intrinsics: seq.intrinsics_init,
        calibrations: None,
    };
    Ok(RecoveryProblem {
        pairs,
        init,
        free: seq.free,
        weights: seq.weights,
        aggregation: SourceAggregation::Min,
        cost_volume: seq.cost_volume.clone(),
    })
}

pub fn recover_sequence(seq: &SequenceProblem, options: &SolveOptions) -> Result<RecoveryResult> {
    solve(&sequence_problem(seq)?, options)
}

/// Frame `k` to frame `k + 1` motions from a sequence result: the inverse of
/// each pair's pose towards its immediately preceding frame.
pub fn sequence_motions(result: &RecoveryResult) -> Vec<PoseSE3> {
    result.poses.iter().map(|p| p[0].inverse()).collect()
}

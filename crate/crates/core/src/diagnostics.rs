//! Finite-difference verification of the whole loss stack on a small
//! rendered problem: data fidelity through the warp and sampler, both
//! smoothness terms, the auxiliary term and depth consistency against a
//! soft-argmin cost-volume depth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost_volume::{argmin_depth, build_cost_volume, extract_features, make_planes, ArgminMode, FeatureMode};
use crate::gradcheck::{check_gradient, FdOptions, FdReport};
use crate::losses::{
    auxiliary_loss, data_fidelity, depth_consistency, edge_aware_smoothness, residual_smoothness, total_loss,
    LossWeights, SourceAggregation, SupervisionInputs,
};
use crate::sampling::synthesize_target;
use crate::scenes::{make_pair, Scene, SceneGeometry, TextureSpec};
use crate::{Error, Intrinsics, PixelGrid, PoseSE3, Result, Tensor, Var};

/// Side length of the gradient-suite images.
pub const SUITE_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    All,
    Data,
    /// Residual smoothness of the calibration image.
    Rs,
    /// Auxiliary flow-reconstruction term.
    Ax,
    /// Edge-aware depth smoothness.
    Es,
    Consistency,
}

impl std::str::FromStr for LossTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => LossTerm::All,
            "data" => LossTerm::Data,
            "rs" => LossTerm::Rs,
            "ax" => LossTerm::Ax,
            "es" => LossTerm::Es,
            "consistency" => LossTerm::Consistency,
            other => return Err(Error::Usage(format!("unknown loss term {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Depth,
    Pose,
    Intrinsics,
    Calibration,
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Variable::Depth => "depth",
            Variable::Pose => "pose",
            Variable::Intrinsics => "intrinsics",
            Variable::Calibration => "calibration",
        }
    }
}

impl LossTerm {
    pub fn name(self) -> &'static str {
        match self {
            LossTerm::All => "all",
            LossTerm::Data => "data",
            LossTerm::Rs => "rs",
            LossTerm::Ax => "ax",
            LossTerm::Es => "es",
            LossTerm::Consistency => "consistency",
        }
    }

    /// Variables the term depends on.
    pub fn variables(self) -> &'static [Variable] {
        use Variable::*;
        match self {
            LossTerm::All | LossTerm::Data | LossTerm::Rs => &[Depth, Pose, Intrinsics, Calibration],
            LossTerm::Ax => &[Calibration],
            LossTerm::Es => &[Depth],
            LossTerm::Consistency => &[Depth, Pose, Intrinsics],
        }
    }
}

/// A random two-source problem with every variable slightly off its ground
/// truth.
#[derive(Clone, Debug)]
pub struct SuiteProblem {
    pub target: Tensor,
    pub sources: Vec<Tensor>,
    pub flow_synthesized: Tensor,
    pub depth: Tensor,
    pub poses: Vec<PoseSE3>,
    pub intrinsics: Intrinsics,
    pub calibration: Tensor,
}

fn jitter(rng: &mut ChaCha8Rng, t: &Tensor, amount: f64) -> Tensor {
    let data = t.data().iter().map(|v| v + rng.gen_range(-amount..amount)).collect();
    Tensor::new(t.shape(), data).expect("same shape")
}

pub fn suite_problem(seed: u64) -> Result<SuiteProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = PixelGrid::new(SUITE_SIZE, SUITE_SIZE)?;
    let normal = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), 1.0];
    let scene = Scene::new(
        SceneGeometry::SlantedPlane {
            depth: rng.gen_range(2.0..4.0),
            normal,
        },
        TextureSpec {
            seed: rng.gen(),
            frequency_range: [0.5, 1.2],
            ..TextureSpec::default()
        },
    );
    let intr = Intrinsics::new(
        rng.gen_range(0.8..1.1),
        rng.gen_range(0.8..1.1),
        rng.gen_range(0.45..0.55),
        rng.gen_range(0.45..0.55),
    )?;
    let mut pose = |sign: f64| {
        PoseSE3::new(
            [rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02)],
            [sign * rng.gen_range(0.05..0.15), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)],
        )
    };
    let gt_poses = [pose(1.0), pose(-1.0)];
    let a = make_pair(&scene, &gt_poses[0], &intr, grid)?;
    let b = make_pair(&scene, &gt_poses[1], &intr, grid)?;

    let depth = jitter(&mut rng, &a.depth.map(f64::ln), 0.05).map(f64::exp);
    let poses = gt_poses
        .iter()
        .map(|p| PoseSE3::from_tensor(&jitter(&mut rng, &p.to_tensor(), 0.01)))
        .collect::<Result<Vec<_>>>()?;
    let intrinsics = Intrinsics::from_tensor(&jitter(&mut rng, &intr.to_tensor(), 0.02))?;
    let calibration = jitter(&mut rng, &Tensor::zeros(a.target.shape()), 0.05);
    let flow_synthesized = jitter(&mut rng, &a.target, 0.05);
    Ok(SuiteProblem {
        target: a.target,
        sources: vec![a.source, b.source],
        flow_synthesized,
        depth,
        poses,
        intrinsics,
        calibration,
    })
}

struct Vars<'g> {
    depth: Var<'g>,
    poses: Vec<Var<'g>>,
    intrinsics: Var<'g>,
    calibration: Var<'g>,
}

fn term_loss<'g>(p: &SuiteProblem, v: &Vars<'g>, term: LossTerm) -> Result<Var<'g>> {
    let g = v.depth.graph();
    let weights = LossWeights::default();
    let views = p
        .sources
        .iter()
        .zip(&v.poses)
        .map(|(s, &pose)| synthesize_target(g.constant(s.clone()), v.depth, pose, v.intrinsics))
        .collect::<Result<Vec<_>>>()?;
    let first = views[0].image;
    let inp = SupervisionInputs {
        target: g.constant(p.target.clone()),
        synthesized: views,
        flow_synthesized: Some(g.constant(p.flow_synthesized.clone())),
        calibration: Some(v.calibration),
        visibility: None,
        aggregation: SourceAggregation::Min,
    };
    let cv_depth = || -> Result<Var<'g>> {
        let planes = make_planes(1.0, 6.0, 32)?;
        let feats = |t: &Tensor| extract_features(t, FeatureMode::Identity).map(|f| g.constant(f));
        let sources = p
            .sources
            .iter()
            .zip(&v.poses)
            .map(|(s, &pose)| Ok((feats(s)?, pose)))
            .collect::<Result<Vec<_>>>()?;
        let vol = build_cost_volume(feats(&p.target)?, &sources, v.intrinsics, &planes)?;
        argmin_depth(&vol, &planes, ArgminMode::Soft { temperature: 0.02 })
    };
    match term {
        LossTerm::All => Ok(total_loss(&inp, v.depth, Some(cv_depth()?), &weights)?.0),
        LossTerm::Data => data_fidelity(&inp, &weights),
        LossTerm::Rs => residual_smoothness(v.calibration, inp.target, first),
        LossTerm::Ax => auxiliary_loss(&inp, &weights),
        LossTerm::Es => edge_aware_smoothness(v.depth, inp.target),
        LossTerm::Consistency => depth_consistency(v.depth, cv_depth()?),
    }
}

#[derive(Clone, Debug)]
pub struct SuiteCheck {
    pub term: LossTerm,
    pub variable: Variable,
    pub report: FdReport,
}

impl std::fmt::Display for SuiteCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:<12} d/d{:<12} {}", self.term.name(), self.variable.name(), self.report)
    }
}

/// Checks the gradient of `term` with respect to each variable it depends
/// on. `LossTerm::All` checks every term as well as the total.
pub fn loss_stack_gradcheck(seed: u64, tolerance: f64, term: LossTerm) -> Result<Vec<SuiteCheck>> {
    let p = suite_problem(seed)?;
    let opts = FdOptions {
        tolerance,
        seed,
        ..FdOptions::default()
    };
    let terms: &[LossTerm] = match term {
        LossTerm::All => &[
            LossTerm::All,
            LossTerm::Data,
            LossTerm::Rs,
            LossTerm::Ax,
            LossTerm::Es,
            LossTerm::Consistency,
        ],
        _ => std::slice::from_ref(match term {
            LossTerm::Data => &LossTerm::Data,
            LossTerm::Rs => &LossTerm::Rs,
            LossTerm::Ax => &LossTerm::Ax,
            LossTerm::Es => &LossTerm::Es,
            _ => &LossTerm::Consistency,
        }),
    };
    let mut out = Vec::new();
    for &t in terms {
        for &var in t.variables() {
            let report = check_variable(&p, t, var, &opts)?;
            out.push(SuiteCheck {
                term: t,
                variable: var,
                report,
            });
        }
    }
    Ok(out)
}

fn check_variable(p: &SuiteProblem, term: LossTerm, var: Variable, opts: &FdOptions) -> Result<FdReport> {
    // Both poses are packed into one 12-vector when the pose is checked.
    let at = match var {
        Variable::Depth => p.depth.clone(),
        Variable::Pose => Tensor::from_vec(p.poses.iter().flat_map(|q| q.to_array()).collect()),
        Variable::Intrinsics => p.intrinsics.to_tensor(),
        Variable::Calibration => p.calibration.clone(),
    };
    check_gradient(
        |x| {
            let g = x.graph();
            let constant_poses = || p.poses.iter().map(|q| g.constant(q.to_tensor())).collect();
            let vars = Vars {
                depth: if var == Variable::Depth { x } else { g.constant(p.depth.clone()) },
                poses: if var == Variable::Pose {
                    (0..p.poses.len())
                        .map(|i| x.slice_range(6 * i, 6 * i + 6))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    constant_poses()
                },
                intrinsics: if var == Variable::Intrinsics {
                    x
                } else {
                    g.constant(p.intrinsics.to_tensor())
                },
                calibration: if var == Variable::Calibration {
                    x
                } else {
                    g.constant(p.calibration.clone())
                },
            };
            term_loss(p, &vars, term)
        },
        &at,
        opts,
    )
}

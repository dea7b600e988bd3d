//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if a criterion fails that is not listed in
//! `KNOWN_FAILURES`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use diffsfm::camera::{project, unproject, warp_coords_tensor};
use diffsfm::cost_volume::{
    argmin_depth, build_cost_volume_tensor, extract_features, make_planes, ArgminMode, CostVolume, FeatureMode,
};
use diffsfm::diagnostics::{loss_stack_gradcheck, LossTerm};
use diffsfm::eval::{depth_metrics, intrinsic_error, median_scale, pose_errors, DepthMetrics, NormBounds, MIN_DEPTH};
use diffsfm::losses::{LossWeights, SourceAggregation};
use diffsfm::optim::{
    recover_sequence, sequence_motions, solve, CostVolumeSettings, FramePair, FreeSet, InitialValues, RecoveryProblem,
    SequenceProblem, SolveOptions,
};
use diffsfm::sampling::synthesize_target_tensor;
use diffsfm::scenes::{constant_motion, make_pair, make_sequence, Scene, SceneGeometry, TextureSpec};
use diffsfm::{Graph, Intrinsics, PixelGrid, PoseSE3, Tensor};
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to fail, with the reason. See the project notes for
/// the full analysis.
const KNOWN_FAILURES: &[(usize, &str)] = &[(
    5,
    "on single-sequence desk-scale problems the cost-volume consistency term biases depth and pose instead of helping",
)];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gt_intrinsics() -> Intrinsics {
    Intrinsics::new(0.82, 1.02, 0.5, 0.5).unwrap()
}

fn init_intrinsics() -> Intrinsics {
    Intrinsics::new(1.0, 1.0, 0.5, 0.5).unwrap()
}

fn random_pose(rng: &mut ChaCha8Rng, rot: f64, trans: [f64; 3]) -> PoseSE3 {
    PoseSE3::new(
        [rng.gen_range(-rot..rot), rng.gen_range(-rot..rot), rng.gen_range(-rot..rot)],
        [
            rng.gen_range(-trans[0]..trans[0]),
            rng.gen_range(-trans[1]..trans[1]),
            rng.gen_range(-trans[2]..trans[2]),
        ],
    )
}

fn gradient_suite() -> Outcome {
    let mut failed = Vec::new();
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        for c in loss_stack_gradcheck(seed, 1e-4, LossTerm::All).unwrap() {
            total += 1;
            worst = worst.max(c.report.max_rel_error);
            if !c.report.passed {
                failed.push(format!("seed {seed}: {c}"));
            }
        }
    }
    outcome(
        failed.is_empty(),
        format!("{total} checks, worst rel error {worst:.2e}; failures: {failed:?}"),
    )
}

fn warp_identity_and_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = PixelGrid::new(32, 24).unwrap();
    let (h, w) = (grid.height, grid.width);
    let mut identity_err: f64 = 0.0;
    let mut compose_err: f64 = 0.0;
    let mut round_trip_err: f64 = 0.0;
    for _ in 0..10 {
        let k = Intrinsics::new(
            rng.gen_range(0.6..1.2),
            rng.gen_range(0.6..1.2),
            rng.gen_range(0.4..0.6),
            rng.gen_range(0.4..0.6),
        )
        .unwrap();
        let depth = Tensor::new(&[h, w], (0..h * w).map(|_| rng.gen_range(1.0..8.0)).collect()).unwrap();
        let pose = random_pose(&mut rng, 0.1, [0.3, 0.3, 0.3]);

        let (coords, _) = warp_coords_tensor(&depth, &PoseSE3::identity(), &k).unwrap();
        let (composed, _) = warp_coords_tensor(&depth, &pose.compose(&pose.inverse()), &k).unwrap();
        let (forward, valid) = warp_coords_tensor(&depth, &pose, &k).unwrap();
        let km = k.pixel_matrix(grid);
        let inverse = pose.inverse();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (u, v) = (x as f64, y as f64);
                identity_err = identity_err.max((coords.data()[2 * i] - u).abs().max((coords.data()[2 * i + 1] - v).abs()));
                compose_err =
                    compose_err.max((composed.data()[2 * i] - u).abs().max((composed.data()[2 * i + 1] - v).abs()));
                if valid.data()[i] == 0.0 {
                    continue;
                }
                let p = unproject(&Vector2::new(u, v), depth.data()[i], &km).unwrap();
                let z_source = pose.transform(&p).z;
                let source_pixel = Vector2::new(forward.data()[2 * i], forward.data()[2 * i + 1]);
                let back = project(&inverse.transform(&unproject(&source_pixel, z_source, &km).unwrap()), &km).unwrap();
                round_trip_err = round_trip_err.max((back.x - u).abs().max((back.y - v).abs()));
            }
        }
    }
    outcome(
        identity_err <= 1e-12 && compose_err <= 1e-10 && round_trip_err <= 1e-10,
        format!("identity {identity_err:.1e} (<= 1e-12), compose {compose_err:.1e}, round trip {round_trip_err:.1e} (<= 1e-10)"),
    )
}

fn renderer_warper_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = PixelGrid::default();
    let mut worst: f64 = 0.0;
    for draw in 0..20 {
        let geometry = match draw % 3 {
            0 => SceneGeometry::FrontoPlane {
                depth: rng.gen_range(2.0..5.0),
            },
            1 => SceneGeometry::SlantedPlane {
                depth: rng.gen_range(2.0..5.0),
                normal: [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 1.0],
            },
            _ => SceneGeometry::TwoPlanes {
                background_depth: rng.gen_range(3.5..5.0),
                foreground_depth: rng.gen_range(1.5..2.5),
                foreground_extent: [-0.4, 0.3, -0.3, 0.4],
            },
        };
        let scene = Scene::new(
            geometry,
            TextureSpec {
                seed: rng.gen(),
                ..TextureSpec::default()
            },
        );
        let pose = random_pose(&mut rng, 0.03, [0.15, 0.15, 0.15]);
        let pair = make_pair(&scene, &pose, &gt_intrinsics(), grid).unwrap();
        let (synth, _) = synthesize_target_tensor(&pair.source, &pair.depth, &pose, &gt_intrinsics()).unwrap();
        let c = pair.target.channels();
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, &vis) in pair.visibility.data().iter().enumerate() {
            if vis > 0.0 {
                for ch in 0..c {
                    sum += (synth.data()[i * c + ch] - pair.target.data()[i * c + ch]).abs();
                    n += 1;
                }
            }
        }
        worst = worst.max(sum / n as f64);
    }
    outcome(worst < 1e-3, format!("worst mean abs error {worst:.2e} over 20 draws at {}x{} (< 1e-3)", grid.width, grid.height))
}

fn intrinsics_recovery() -> Outcome {
    let gt = gt_intrinsics();
    let grid = PixelGrid::new(64, 64).unwrap();
    let mut worst: f64 = 0.0;
    let mut recovered = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = Scene::new(
            SceneGeometry::SlantedPlane {
                depth: 3.0,
                normal: [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 1.0],
            },
            TextureSpec {
                seed,
                ..TextureSpec::default()
            },
        );
        let (mut pairs, mut depths, mut poses) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..3 {
            let pose = random_pose(&mut rng, 0.05, [0.3, 0.3, 0.2]);
            let p = make_pair(&scene, &pose, &gt, grid).unwrap();
            pairs.push(FramePair {
                visibility: Some(p.visibility),
                ..FramePair::new(p.target, p.source)
            });
            depths.push(p.depth);
            poses.push(vec![pose]);
        }
        let problem = RecoveryProblem {
            pairs,
            init: InitialValues {
                depths,
                poses,
                intrinsics: init_intrinsics(),
                calibrations: None,
            },
            free: FreeSet {
                intrinsics: true,
                ..FreeSet::default()
            },
            weights: LossWeights::default(),
            aggregation: SourceAggregation::Min,
            cost_volume: None,
        };
        let opts = SolveOptions {
            steps: 300,
            seed,
            ..SolveOptions::default()
        };
        let k = solve(&problem, &opts).unwrap().intrinsics;
        worst = intrinsic_error(&k, &gt).iter().fold(worst, |m, e| m.max(*e));
        recovered.push(k.to_array().map(|v| (v * 1e4).round() / 1e4));
    }
    outcome(worst <= 0.02, format!("worst parameter error {worst:.4} (<= 0.02); recovered {recovered:?}"))
}

fn ablation_ordering() -> Outcome {
    let gt = gt_intrinsics();
    let grid = PixelGrid::new(48, 48).unwrap();
    let bounds = NormBounds {
        align_scale: true,
        ..NormBounds::default()
    };
    // [arm][rotation, trajectory, intrinsics]
    let mut sums = [[0.0; 3]; 2];
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = Scene::new(
            SceneGeometry::TwoPlanes {
                background_depth: 4.0,
                foreground_depth: 2.0,
                foreground_extent: [-0.5, 0.4, -0.45, 0.5],
            },
            TextureSpec {
                seed,
                ..TextureSpec::default()
            },
        );
        let motion = random_pose(&mut rng, 0.05, [0.15, 0.15, 0.1]);
        let seq = make_sequence(&scene, &constant_motion(5, &motion), &gt, grid).unwrap();
        for (arm, with_cv) in [(0, false), (1, true)] {
            let problem = SequenceProblem {
                frames: seq.frames.clone(),
                past_frames: 2,
                depth_init: 1.0,
                intrinsics_init: init_intrinsics(),
                free: FreeSet {
                    depth: true,
                    pose: true,
                    intrinsics: true,
                    calibration: false,
                },
                weights: LossWeights::default(),
                cost_volume: with_cv.then(|| CostVolumeSettings {
                    planes: make_planes(1.0, 6.0, 32).unwrap(),
                    feature_mode: FeatureMode::Identity,
                    temperature: 1e-3,
                }),
            };
            let opts = SolveOptions {
                steps: 200,
                seed,
                ..SolveOptions::default()
            };
            let r = recover_sequence(&problem, &opts).unwrap();
            let e = pose_errors(&sequence_motions(&r), &seq.relative, &bounds).unwrap();
            let k = intrinsic_error(&r.intrinsics, &gt).iter().sum::<f64>() / 4.0;
            sums[arm][0] += e.rotation.mean / 5.0;
            sums[arm][1] += e.trajectory.mean / 5.0;
            sums[arm][2] += k / 5.0;
        }
    }
    let [camera, cv] = sums;
    outcome(
        cv[0] < camera[0] && cv[1] < camera[1] && cv[2] < camera[2],
        format!(
            "camera+costvolume vs camera: rotation {:.4} vs {:.4}, trajectory {:.4} vs {:.4}, intrinsics {:.4} vs {:.4}",
            cv[0], camera[0], cv[1], camera[1], cv[2], camera[2]
        ),
    )
}

fn cost_volume_exactness() -> Outcome {
    // Pure x-translation with an integer disparity fx * W * tx / d = 4 px at
    // the true plane, so the true hypothesis samples pixel centers exactly.
    let (w, h) = (64, 48);
    let grid = PixelGrid::new(w, h).unwrap();
    let k = Intrinsics::new(1.0, 1.0, 0.5, 0.5).unwrap();
    let depth = 4.0;
    let pose = PoseSE3::new([0.0; 3], [0.25, 0.0, 0.0]);
    let scene = Scene::new(SceneGeometry::FrontoPlane { depth }, TextureSpec::default());
    let pair = make_pair(&scene, &pose, &k, grid).unwrap();
    let planes = make_planes(1.0, 7.0, 25).unwrap();
    let true_plane = planes.values().iter().position(|&d| d == depth).expect("plane set contains the depth");

    let f_t = extract_features(&pair.target, FeatureMode::Identity).unwrap();
    let f_s = extract_features(&pair.source, FeatureMode::Identity).unwrap();
    let (costs, coverage) = build_cost_volume_tensor(&f_t, &[(f_s, pose)], &k, &planes).unwrap();
    let g = Graph::new();
    let vol = CostVolume {
        costs: g.constant(costs.clone()),
        coverage: coverage.clone(),
    };
    let hard = argmin_depth(&vol, &planes, ArgminMode::Hard).unwrap().value();

    let c = pair.target.channels();
    let (mut checked, mut wrong) = (0, 0);
    let mut max_true_cost: f64 = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            if coverage.data()[true_plane * h * w + i] == 0.0 {
                continue;
            }
            max_true_cost = max_true_cost.max(costs.data()[true_plane * h * w + i]);
            let textured = (0..c).any(|ch| {
                let at = |xx: usize| pair.target.data()[(y * w + xx) * c + ch];
                (at(x + 1) - at(x - 1)).abs() > 1e-3
            });
            if textured {
                checked += 1;
                if hard.data()[i] != depth {
                    wrong += 1;
                }
            }
        }
    }
    outcome(
        checked > 0 && wrong == 0 && max_true_cost <= 1e-3,
        format!("{wrong} of {checked} textured interior pixels off the true plane; max cost at truth {max_true_cost:.1e}"),
    )
}

/// Straight single-loop evaluation, kept independent of the library.
fn reference_metrics(pred: &[f64], gt: &[f64], cap: f64) -> [f64; 7] {
    let mut acc = [0.0; 7];
    let mut n = 0.0;
    for (&p, &g) in pred.iter().zip(gt) {
        if g <= 0.0 {
            continue;
        }
        let p = p.max(MIN_DEPTH).min(cap);
        let g = g.max(MIN_DEPTH).min(cap);
        n += 1.0;
        acc[0] += (p - g).abs() / g;
        acc[1] += (p - g).powi(2) / g;
        acc[2] += (p - g).powi(2);
        acc[3] += (p.ln() - g.ln()).powi(2);
        let r = if p > g { p / g } else { g / p };
        acc[4] += if r < 1.25 { 1.0 } else { 0.0 };
        acc[5] += if r < 1.5625 { 1.0 } else { 0.0 };
        acc[6] += if r < 1.953125 { 1.0 } else { 0.0 };
    }
    [
        acc[0] / n,
        acc[1] / n,
        (acc[2] / n).sqrt(),
        (acc[3] / n).sqrt(),
        100.0 * acc[4] / n,
        100.0 * acc[5] / n,
        100.0 * acc[6] / n,
    ]
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..200);
        let cap = if rng.gen_bool(0.5) { 200.0 } else { rng.gen_range(5.0..50.0) };
        let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-4..120.0)).collect();
        let mut gt: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-4..120.0)).collect();
        gt[0] = gt[0].max(0.5);
        for g in gt.iter_mut().skip(1) {
            if rng.gen_bool(0.1) {
                *g = 0.0;
            }
        }
        let m = depth_metrics(&Tensor::from_vec(pred.clone()), &Tensor::from_vec(gt.clone()), None, cap).unwrap();
        for (a, b) in m.row().iter().zip(reference_metrics(&pred, &gt, cap)) {
            worst = worst.max((a - b).abs());
        }
    }
    let two: DepthMetrics =
        depth_metrics(&Tensor::from_vec(vec![1.0, 4.0]), &Tensor::from_vec(vec![2.0, 4.0]), None, 200.0).unwrap();
    let hand = (two.abs_rel - 0.25).abs() <= 1e-12 && (two.rmse - 0.5f64.sqrt()).abs() <= 1e-12 && two.delta1 == 50.0;
    outcome(
        worst <= 1e-12 && hand,
        format!(
            "max deviation from reference {worst:.1e} over 100 instances; two-pixel case abs_rel {}, rmse {}, delta1 {}",
            two.abs_rel, two.rmse, two.delta1
        ),
    )
}

fn median_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut recovery, mut idempotence, mut invariance): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let n = rng.gen_range(1..100);
        let gt = Tensor::from_vec((0..n).map(|_| rng.gen_range(0.1..50.0)).collect());
        let pred = Tensor::from_vec((0..n).map(|_| rng.gen_range(0.1..50.0)).collect());
        let c = rng.gen_range(0.01..100.0);

        let rec = median_scale(&gt.scale(c), &gt, None).unwrap();
        recovery = recovery.max(rec.max_abs_diff(&gt) / gt.max());
        let once = median_scale(&pred, &gt, None).unwrap();
        let twice = median_scale(&once, &gt, None).unwrap();
        idempotence = idempotence.max(twice.max_abs_diff(&once) / once.max());
        let a = depth_metrics(&once, &gt, None, 200.0).unwrap();
        let b = depth_metrics(&median_scale(&pred.scale(c), &gt, None).unwrap(), &gt, None, 200.0).unwrap();
        for (x, y) in a.row().iter().zip(b.row()) {
            invariance = invariance.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    outcome(
        recovery <= 1e-12 && idempotence <= 1e-12 && invariance <= 1e-9,
        format!("relative errors: recovery {recovery:.1e}, idempotence {idempotence:.1e}, pipeline invariance {invariance:.1e}"),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()))
        .collect()
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{
            "grid": {"width": 32, "height": 24},
            "trajectory": {"kind": "constant_motion", "frames": 4,
                "motion": {"rotation": [0.0, 0.01, 0.005], "translation": [0.08, 0.01, -0.04]}},
            "optimizer": {"steps": 20},
            "cost_volume": {"n_planes": 16, "d_min": 1.0, "d_max": 6.0}
        }"#,
    )
    .unwrap();
    let root = dir.path().join("run");
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let cfg = config.to_str().unwrap();
    let commands: Vec<Vec<String>> = vec![
        vec!["synth", "--config", cfg, "--seed", "4", "--output", &p("data")],
        vec!["synth", "--config", cfg, "--format", "pfm", "--output", &p("data_pfm")],
        vec!["optimize", "--data", &p("data"), "--seed", "4", "--output", &p("cv")],
        vec!["optimize", "--data", &p("data"), "--ablation", "camera", "--output", &p("camera")],
        vec!["optimize", "--data", &p("data_pfm"), "--ablation", "baseline", "--output", &p("baseline")],
        vec!["eval", "--pred", &p("cv"), &p("camera"), &p("baseline"), "--gt", &p("data"), "--output", &p("eval")],
        vec!["gradcheck", "--seed", "4", "--output", &p("grad")],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(String::from).collect())
    .collect();
    let outputs = ["data", "data_pfm", "cv", "camera", "baseline", "eval", "grad"];

    let run = || -> Result<Vec<BTreeMap<PathBuf, Vec<u8>>>, String> {
        for args in &commands {
            let out = Command::new(env!("CARGO_BIN_EXE_diffsfm"))
                .args(args)
                .env("RUST_LOG", "warn")
                .output()
                .unwrap();
            if !out.status.success() {
                return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
            }
        }
        Ok(outputs.iter().map(|o| snapshot(&root.join(o))).collect())
    };
    let first = match run() {
        Ok(s) => s,
        Err(e) => return outcome(false, e),
    };
    fs::remove_dir_all(&root).unwrap();
    let second = match run() {
        Ok(s) => s,
        Err(e) => return outcome(false, e),
    };
    let files: usize = first.iter().map(|s| s.len()).sum();
    let differing: Vec<String> = first
        .iter()
        .zip(&second)
        .zip(outputs)
        .flat_map(|((a, b), o)| {
            let names: BTreeSet<&PathBuf> = a.keys().chain(b.keys()).collect();
            names
                .into_iter()
                .filter(|n| a.get(*n) != b.get(*n))
                .map(|n| format!("{o}/{}", n.display()))
                .collect::<Vec<_>>()
        })
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} commands, {files} files compared; differing: {differing:?}", commands.len()),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient suite", Duration::from_secs(60), gradient_suite),
        ("warp identity and round trip", Duration::from_secs(5), warp_identity_and_round_trip),
        ("renderer/warper consistency", Duration::from_secs(30), renderer_warper_consistency),
        ("intrinsics recovery", Duration::from_secs(300), intrinsics_recovery),
        ("ablation ordering", Duration::from_secs(1200), ablation_ordering),
        ("cost-volume exactness", Duration::from_secs(10), cost_volume_exactness),
        ("metric oracle", Duration::from_secs(5), metric_oracle),
        ("median-scaling properties", Duration::from_secs(5), median_scaling),
        ("determinism", Duration::MAX, cli_determinism),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= budget;
        let passed = out.passed && in_budget;
        let budget_note = if budget == Duration::MAX {
            String::new()
        } else {
            format!(", budget {}s", budget.as_secs())
        };
        println!(
            "{} {n}. {name}: {} [{:.1}s{budget_note}]",
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
        if !passed {
            match KNOWN_FAILURES.iter().find(|(k, _)| *k == n) {
                Some((_, why)) => println!("     known failure: {why}"),
                None => unexpected.push(n),
            }
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}

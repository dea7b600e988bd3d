use diffsfm::cost_volume::{argmin_depth, build_cost_volume_tensor, extract_features, make_planes, ArgminMode, FeatureMode};
use diffsfm::eval::{depth_metrics, median_scale, pose_errors, NormBounds, DEFAULT_CAP};
use diffsfm::io::ExperimentConfig;
use diffsfm::optim::{recover_sequence, sequence_motions, Ablation, SolveOptions};
use diffsfm::sampling::synthesize_target_tensor;
use diffsfm::scenes::{constant_motion, make_pair, make_sequence, Scene, SceneGeometry, TextureSpec};
use diffsfm::{Graph, Intrinsics, PixelGrid, PoseSE3, Tensor};
use proptest::prelude::*;

fn k() -> Intrinsics {
    Intrinsics::new(0.82, 1.02, 0.5, 0.5).unwrap()
}

fn geometry() -> impl Strategy<Value = SceneGeometry> {
    prop_oneof![
        (2.0f64..5.0).prop_map(|depth| SceneGeometry::FrontoPlane { depth }),
        (2.0f64..5.0, -0.3f64..0.3, -0.3f64..0.3).prop_map(|(depth, nx, ny)| SceneGeometry::SlantedPlane {
            depth,
            normal: [nx, ny, 1.0],
        }),
        (3.5f64..5.0, 1.5f64..2.5).prop_map(|(b, f)| SceneGeometry::TwoPlanes {
            background_depth: b,
            foreground_depth: f,
            foreground_extent: [-0.4, 0.3, -0.3, 0.4],
        }),
    ]
}

fn pose() -> impl Strategy<Value = PoseSE3> {
    (prop::array::uniform3(-0.03f64..0.03), prop::array::uniform3(-0.15f64..0.15))
        .prop_map(|(r, t)| PoseSE3::new(r, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn warping_the_source_reproduces_the_target(geom in geometry(), pose in pose(), seed in 0u64..1000) {
        let scene = Scene::new(geom, TextureSpec { seed, ..TextureSpec::default() });
        let pair = make_pair(&scene, &pose, &k(), PixelGrid::new(96, 80).unwrap()).unwrap();
        let (synth, mask) = synthesize_target_tensor(&pair.source, &pair.depth, &pose, &k()).unwrap();
        let c = pair.target.channels();
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, (&vis, &m)) in pair.visibility.data().iter().zip(mask.data()).enumerate() {
            if vis > 0.0 {
                prop_assert!(m > 0.0, "visible pixel {i} outside the source");
                for ch in 0..c {
                    sum += (synth.data()[i * c + ch] - pair.target.data()[i * c + ch]).abs();
                    n += 1;
                }
            }
        }
        prop_assume!(n > 0);
        prop_assert!(sum / (n as f64) < 1e-3, "mae {}", sum / n as f64);
    }

    #[test]
    fn median_scaled_metrics_ignore_prediction_scale(
        values in prop::collection::vec((0.2f64..30.0, 0.2f64..30.0), 4..40),
        c in 0.05f64..20.0,
    ) {
        let n = values.len();
        let pred = Tensor::new(&[1, n], values.iter().map(|v| v.0).collect()).unwrap();
        let gt = Tensor::new(&[1, n], values.iter().map(|v| v.1).collect()).unwrap();
        let a = depth_metrics(&median_scale(&pred, &gt, None).unwrap(), &gt, None, DEFAULT_CAP).unwrap();
        let b = depth_metrics(&median_scale(&pred.scale(c), &gt, None).unwrap(), &gt, None, DEFAULT_CAP).unwrap();
        for (x, y) in a.row().iter().zip(b.row()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}

/// Mean absolute hard-argmin depth error over interior pixels.
fn hard_argmin_error(pair: &diffsfm::scenes::RenderedPair, n_planes: usize) -> f64 {
    let planes = make_planes(1.0, 6.0, n_planes).unwrap();
    let f_t = extract_features(&pair.target, FeatureMode::Identity).unwrap();
    let f_s = extract_features(&pair.source, FeatureMode::Identity).unwrap();
    let (costs, coverage) = build_cost_volume_tensor(&f_t, &[(f_s, pair.pose)], &pair.intrinsics, &planes).unwrap();
    let g = Graph::new();
    let vol = diffsfm::cost_volume::CostVolume {
        costs: g.constant(costs),
        coverage,
    };
    let d = argmin_depth(&vol, &planes, ArgminMode::Hard).unwrap().value();
    let (h, w) = (pair.depth.height(), pair.depth.width());
    let (mut sum, mut n) = (0.0, 0);
    for y in 4..h - 4 {
        for x in 4..w - 4 {
            let i = y * w + x;
            if pair.visibility.data()[i] > 0.0 {
                sum += (d.data()[i] - pair.depth.data()[i]).abs();
                n += 1;
            }
        }
    }
    sum / n as f64
}

#[test]
fn nested_plane_refinement_never_hurts() {
    for (seed, depth) in [(0u64, 2.3), (1, 3.1), (2, 4.4)] {
        let scene = Scene::new(
            SceneGeometry::SlantedPlane {
                depth,
                normal: [0.15, -0.1, 1.0],
            },
            TextureSpec {
                seed,
                ..TextureSpec::default()
            },
        );
        let pose = PoseSE3::new([0.0, 0.01, 0.0], [0.2, 0.03, 0.0]);
        let pair = make_pair(&scene, &pose, &k(), PixelGrid::new(48, 40).unwrap()).unwrap();
        let mut last = f64::INFINITY;
        for n in [6, 11, 21, 41] {
            let e = hard_argmin_error(&pair, n);
            assert!(e <= last + 1e-12, "seed {seed}: {n} planes error {e} > {last}");
            last = e;
        }
    }
}

#[test]
fn baseline_arm_keeps_given_intrinsics() {
    let mut config = ExperimentConfig {
        grid: PixelGrid::new(24, 20).unwrap(),
        ..ExperimentConfig::default()
    };
    config.optimizer.steps = 10;
    let traj = config.trajectory.poses();
    let seq = make_sequence(&config.scene, &traj, &config.intrinsics.ground_truth, config.grid).unwrap();
    let given = config.intrinsics.ground_truth;
    let problem = config.sequence_problem(seq.frames.clone(), Ablation::Baseline, given).unwrap();
    let r = recover_sequence(&problem, &config.optimizer.solve_options()).unwrap();
    assert_eq!(r.intrinsics, given);

    let problem = config.sequence_problem(seq.frames, Ablation::Camera, given).unwrap();
    let r = recover_sequence(&problem, &config.optimizer.solve_options()).unwrap();
    assert_ne!(r.intrinsics, given);
    assert_ne!(r.intrinsics, config.intrinsics.init);
}

#[test]
fn known_intrinsics_recover_a_dolly() {
    let scene = Scene::new(
        SceneGeometry::SlantedPlane {
            depth: 3.0,
            normal: [0.2, -0.1, 1.0],
        },
        TextureSpec::default(),
    );
    let motion = PoseSE3::new([0.0, 0.01, 0.0], [0.1, 0.0, -0.05]);
    let grid = PixelGrid::new(40, 32).unwrap();
    let seq = make_sequence(&scene, &constant_motion(4, &motion), &k(), grid).unwrap();
    let config = ExperimentConfig::default();
    let problem = config.sequence_problem(seq.frames, Ablation::Baseline, k()).unwrap();
    let opts = SolveOptions {
        steps: 300,
        ..SolveOptions::default()
    };
    let r = recover_sequence(&problem, &opts).unwrap();

    let first = r.trace.first().unwrap().objective;
    assert!(r.final_objective() < 0.2 * first, "{first} -> {}", r.final_objective());
    let bounds = NormBounds {
        align_scale: true,
        ..NormBounds::default()
    };
    let e = pose_errors(&sequence_motions(&r), &seq.relative, &bounds).unwrap();
    let identity = pose_errors(&[PoseSE3::identity(); 3], &seq.relative, &bounds).unwrap();
    assert!(e.rotation.mean < identity.rotation.mean, "{e:?}");
    assert!(e.trajectory.mean < 0.5 * identity.trajectory.mean, "{e:?} vs {identity:?}");
}

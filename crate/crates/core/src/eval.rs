//! Median scaling, depth accuracy metrics, and pose / intrinsic errors.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::tensor::median_of;
use crate::{Error, Intrinsics, PoseSE3, Result, Tensor};

/// Depth cap in millimetres used for endoscopic evaluation.
pub const DEFAULT_CAP: f64 = 200.0;
/// Lower clamp keeping ratios and logs finite.
pub const MIN_DEPTH: f64 = 1e-3;

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Indices of evaluated pixels: `valid > 0` and `gt > 0`.
fn valid_indices(gt: &Tensor, valid: Option<&Tensor>) -> Vec<usize> {
    (0..gt.len())
        .filter(|&i| gt.data()[i] > 0.0 && valid.is_none_or(|v| v.data()[i] > 0.0))
        .collect()
}

/// Rescales `pred` so its median over valid pixels equals that of `gt`.
pub fn median_scale(pred: &Tensor, gt: &Tensor, valid: Option<&Tensor>) -> Result<Tensor> {
    check_same("median_scale", pred, gt)?;
    if let Some(v) = valid {
        check_same("median_scale", gt, v)?;
    }
    let idx = valid_indices(gt, valid);
    if idx.is_empty() {
        return Err(Error::NoVisiblePixels);
    }
    if let Some(&i) = idx.iter().find(|&&i| pred.data()[i] <= 0.0) {
        return Err(Error::domain("median_scale", format!("non-positive prediction at index {i}")));
    }
    let mp = median_of(idx.iter().map(|&i| pred.data()[i]).collect()).expect("non-empty");
    let mg = median_of(idx.iter().map(|&i| gt.data()[i]).collect()).expect("non-empty");
    Ok(pred.scale(mg / mp))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    /// Percentages of pixels with `max(d/d*, d*/d)` below 1.25, 1.25², 1.25³.
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
}

impl DepthMetrics {
    pub const HEADER: [&'static str; 7] = ["Abs Rel", "Sq Rel", "RMSE", "RMSE log", "δ<1.25", "δ<1.25²", "δ<1.25³"];

    pub fn row(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }
}

/// Depth metrics over pixels with `valid > 0` and `gt > 0`, after clamping
/// both maps to `[MIN_DEPTH, cap]`. Apply [`median_scale`] first.
pub fn depth_metrics(pred: &Tensor, gt: &Tensor, valid: Option<&Tensor>, cap: f64) -> Result<DepthMetrics> {
    check_same("depth_metrics", pred, gt)?;
    if let Some(v) = valid {
        check_same("depth_metrics", gt, v)?;
    }
    if !(cap > MIN_DEPTH) {
        return Err(Error::InvalidParameter(format!("cap must exceed {MIN_DEPTH}, got {cap}")));
    }
    let idx = valid_indices(gt, valid);
    if idx.is_empty() {
        return Err(Error::NoVisiblePixels);
    }
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut within = [0usize; 3];
    for &i in &idx {
        let d = pred.data()[i].clamp(MIN_DEPTH, cap);
        let g = gt.data()[i].clamp(MIN_DEPTH, cap);
        let diff = g - d;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let l = g.ln() - d.ln();
        sq_log += l * l;
        let ratio = (d / g).max(g / d);
        for (k, count) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *count += 1;
            }
        }
    }
    let n = idx.len() as f64;
    let pct = |c: usize| 100.0 * c as f64 / n;
    Ok(DepthMetrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: pct(within[0]),
        delta2: pct(within[1]),
        delta3: pct(within[2]),
        n_valid: idx.len(),
    })
}

/// Mean of metrics over frames, weighting each frame equally.
pub fn mean_metrics(all: &[DepthMetrics]) -> Option<DepthMetrics> {
    if all.is_empty() {
        return None;
    }
    let n = all.len() as f64;
    let avg = |f: fn(&DepthMetrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    Some(DepthMetrics {
        abs_rel: avg(|m| m.abs_rel),
        sq_rel: avg(|m| m.sq_rel),
        rmse: avg(|m| m.rmse),
        rmse_log: avg(|m| m.rmse_log),
        delta1: avg(|m| m.delta1),
        delta2: avg(|m| m.delta2),
        delta3: avg(|m| m.delta3),
        n_valid: all.iter().map(|m| m.n_valid).sum(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.std)
    }
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

/// Per-component `[lo, hi]` bounds mapping values to `[0, 1]` before the l2
/// norm. The defaults (`[0, 1]`) leave values unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormBounds {
    pub rotation: [[f64; 2]; 3],
    pub position: [[f64; 2]; 3],
    /// Least-squares scale on predicted positions before comparison, for
    /// monocular runs whose translation scale is arbitrary.
    pub align_scale: bool,
}

impl Default for NormBounds {
    fn default() -> Self {
        Self {
            rotation: [[0.0, 1.0]; 3],
            position: [[0.0, 1.0]; 3],
            align_scale: false,
        }
    }
}

impl NormBounds {
    fn validate(&self) -> Result<()> {
        for [lo, hi] in self.rotation.iter().chain(&self.position) {
            if !(hi > lo) {
                return Err(Error::InvalidParameter(format!("normalization bounds need hi > lo, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn normalized_diff(a: &Vector3<f64>, b: &Vector3<f64>, bounds: &[[f64; 2]; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let d = (a[i] - b[i]) / (bounds[i][1] - bounds[i][0]);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors {
    pub rotation: MeanStd,
    pub trajectory: MeanStd,
    pub per_frame_rotation: Vec<f64>,
    pub per_frame_trajectory: Vec<f64>,
}

/// Compares relative-pose sequences: per-frame l2 norm of the normalized
/// axis-angle difference, and of the normalized difference between
/// accumulated positions (the shared origin excluded).
pub fn pose_errors(pred: &[PoseSE3], gt: &[PoseSE3], bounds: &NormBounds) -> Result<PoseErrors> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Usage(format!(
            "pose sequences must be non-empty and of equal length, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    bounds.validate()?;
    let per_frame_rotation: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| normalized_diff(&p.rotation_vector(), &g.rotation_vector(), &bounds.rotation))
        .collect();
    let pp = accumulate_trajectory(pred);
    let gp = accumulate_trajectory(gt);
    let scale = if bounds.align_scale {
        let num: f64 = pp.iter().zip(&gp).map(|(p, g)| p.dot(g)).sum();
        let den: f64 = pp.iter().map(|p| p.norm_squared()).sum();
        if den > 0.0 {
            num / den
        } else {
            1.0
        }
    } else {
        1.0
    };
    let per_frame_trajectory: Vec<f64> = pp[1..]
        .iter()
        .zip(&gp[1..])
        .map(|(p, g)| normalized_diff(&(p * scale), g, &bounds.position))
        .collect();
    Ok(PoseErrors {
        rotation: mean_std(&per_frame_rotation),
        trajectory: mean_std(&per_frame_trajectory),
        per_frame_rotation,
        per_frame_trajectory,
    })
}

/// `|pred - gt|` per parameter, `(fx, fy, cx, cy)`.
pub fn intrinsic_error(pred: &Intrinsics, gt: &Intrinsics) -> [f64; 4] {
    let (p, g) = (pred.to_array(), gt.to_array());
    std::array::from_fn(|i| (p[i] - g[i]).abs())
}

/// Mean ± std of each parameter over repeated runs.
pub fn aggregate_intrinsics(runs: &[Intrinsics]) -> [MeanStd; 4] {
    std::array::from_fn(|i| mean_std(&runs.iter().map(|k| k.to_array()[i]).collect::<Vec<_>>()))
}

/// Positions of the accumulated poses `I, r0, r0∘r1, ...`; one more entry
/// than `relative`, starting at the origin.
pub fn accumulate_trajectory(relative: &[PoseSE3]) -> Vec<Vector3<f64>> {
    let mut acc = PoseSE3::identity();
    let mut out = Vec::with_capacity(relative.len() + 1);
    out.push(acc.translation_vector());
    for r in relative {
        acc = acc.compose(r);
        out.push(acc.translation_vector());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec())
    }

    #[test]
    fn median_scale_examples() {
        let gt = t(&[2.0, 4.0, 6.0, 8.0]);
        assert_eq!(median_scale(&gt.scale(2.0), &gt, None).unwrap(), gt);
        assert_eq!(median_scale(&gt, &gt, None).unwrap(), gt);
        let out = median_scale(&t(&[1.0, 2.0, 3.0, 100.0]), &gt, None).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0, 6.0, 200.0]);
        assert!(matches!(
            median_scale(&gt, &gt, Some(&Tensor::zeros(&[4]))),
            Err(Error::NoVisiblePixels)
        ));
    }

    #[test]
    fn metrics_identity() {
        let d = t(&[1.0, 2.5, 7.0]);
        let m = depth_metrics(&d, &d, None, DEFAULT_CAP).unwrap();
        assert_eq!(m.row(), [0.0, 0.0, 0.0, 0.0, 100.0, 100.0, 100.0]);
        assert_eq!(m.n_valid, 3);
    }

    #[test]
    fn metrics_two_pixel_hand_values() {
        let m = depth_metrics(&t(&[1.0, 4.0]), &t(&[2.0, 4.0]), None, DEFAULT_CAP).unwrap();
        assert!((m.abs_rel - 0.25).abs() < 1e-15);
        assert!((m.sq_rel - 0.25).abs() < 1e-15);
        assert!((m.rmse - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((m.rmse_log - (std::f64::consts::LN_2.powi(2) / 2.0).sqrt()).abs() < 1e-15);
        // The ratio on the first pixel is 2, above 1.25^3 = 1.953125.
        assert_eq!((m.delta1, m.delta2, m.delta3), (50.0, 50.0, 50.0));
    }

    #[test]
    fn cap_clamps_ground_truth() {
        let m = depth_metrics(&t(&[200.0]), &t(&[500.0]), None, 200.0).unwrap();
        assert_eq!(m.abs_rel, 0.0);
    }

    #[test]
    fn invalid_and_non_positive_gt_excluded() {
        let valid = t(&[1.0, 0.0, 1.0]);
        let m = depth_metrics(&t(&[1.0, 50.0, 3.0]), &t(&[1.0, 2.0, 0.0]), Some(&valid), DEFAULT_CAP).unwrap();
        assert_eq!(m.n_valid, 1);
        assert_eq!(m.abs_rel, 0.0);
        assert!(matches!(
            depth_metrics(&t(&[1.0]), &t(&[0.0]), None, DEFAULT_CAP),
            Err(Error::NoVisiblePixels)
        ));
    }

    #[test]
    fn pose_error_examples() {
        let a = vec![PoseSE3::new([0.1, 0.0, 0.0], [1.0, 0.0, 0.0]); 3];
        let e = pose_errors(&a, &a, &NormBounds::default()).unwrap();
        assert_eq!((e.rotation, e.trajectory), (MeanStd::default(), MeanStd::default()));
        let p = [PoseSE3::new([0.03, 0.0, 0.0], [0.0; 3])];
        let e = pose_errors(&p, &[PoseSE3::identity()], &NormBounds::default()).unwrap();
        assert!((e.rotation.mean - 0.03).abs() < 1e-15);
        assert_eq!(e.rotation.std, 0.0);
        assert!(pose_errors(&p, &[], &NormBounds::default()).is_err());
    }

    #[test]
    fn normalization_bounds_rescale_errors() {
        let p = [PoseSE3::new([0.0; 3], [0.5, 0.0, 0.0])];
        let bounds = NormBounds {
            position: [[-1.0, 1.0]; 3],
            ..Default::default()
        };
        let e = pose_errors(&p, &[PoseSE3::identity()], &bounds).unwrap();
        assert!((e.trajectory.mean - 0.25).abs() < 1e-15);
    }

    #[test]
    fn scale_alignment_removes_uniform_scale() {
        let gt: Vec<PoseSE3> = (0..4).map(|i| PoseSE3::new([0.0, 0.02 * i as f64, 0.0], [0.1, 0.0, 0.05])).collect();
        let pred: Vec<PoseSE3> = gt
            .iter()
            .map(|p| PoseSE3::new(p.rotation, p.translation.map(|v| v * 3.0)))
            .collect();
        let bounds = NormBounds {
            align_scale: true,
            ..Default::default()
        };
        let e = pose_errors(&pred, &gt, &bounds).unwrap();
        assert!(e.trajectory.mean < 1e-12);
    }

    #[test]
    fn intrinsic_errors() {
        let gt = Intrinsics::new(0.82, 1.02, 0.5, 0.5).unwrap();
        assert_eq!(intrinsic_error(&gt, &gt), [0.0; 4]);
        let close = Intrinsics::new(0.81, 1.02, 0.5, 0.5).unwrap();
        let far = Intrinsics::new(0.86, 1.02, 0.5, 0.5).unwrap();
        assert!((intrinsic_error(&close, &gt)[0] - 0.01).abs() < 1e-12);
        assert!((intrinsic_error(&far, &gt)[0] - 0.04).abs() < 1e-12);
        let agg = aggregate_intrinsics(&[close, far]);
        assert!((agg[0].mean - 0.835).abs() < 1e-12);
        assert!((agg[0].std - 0.025).abs() < 1e-12);
    }

    #[test]
    fn trajectories() {
        assert_eq!(accumulate_trajectory(&[]), vec![Vector3::zeros()]);
        let step = PoseSE3::new([0.0; 3], [1.0, 0.0, 0.0]);
        let pos = accumulate_trajectory(&[step, step]);
        assert_eq!(pos, vec![Vector3::zeros(), Vector3::x(), Vector3::x() * 2.0]);
        let turn = PoseSE3::new([0.0, 0.0, std::f64::consts::FRAC_PI_2], [1.0, 0.0, 0.0]);
        let square = accumulate_trajectory(&[turn; 4]);
        assert!(square[4].norm() < 1e-10);
        // Brute force with rotation matrices.
        let (mut r, mut p) = (nalgebra::Matrix3::identity(), Vector3::zeros());
        for (k, expect) in square.iter().enumerate().skip(1) {
            p += r * turn.translation_vector();
            r *= turn.rotation_matrix();
            assert!((p - expect).norm() < 1e-12, "step {k}");
        }
    }

    proptest! {
        #[test]
        fn deltas_nest(pairs in prop::collection::vec((0.01f64..50.0, 0.01f64..50.0), 1..40)) {
            let pred = Tensor::from_vec(pairs.iter().map(|p| p.0).collect());
            let gt = Tensor::from_vec(pairs.iter().map(|p| p.1).collect());
            let m = depth_metrics(&pred, &gt, None, DEFAULT_CAP).unwrap();
            prop_assert!(m.delta1 <= m.delta2 && m.delta2 <= m.delta3);
            prop_assert!(m.abs_rel >= 0.0 && m.rmse >= 0.0 && m.rmse_log >= 0.0);
        }

        #[test]
        fn scaled_pipeline_is_scale_invariant(
            pairs in prop::collection::vec((0.1f64..20.0, 0.1f64..20.0), 1..30),
            c in 0.01f64..100.0,
        ) {
            let pred = Tensor::from_vec(pairs.iter().map(|p| p.0).collect());
            let gt = Tensor::from_vec(pairs.iter().map(|p| p.1).collect());
            let a = median_scale(&pred, &gt, None).unwrap();
            let b = median_scale(&pred.scale(c), &gt, None).unwrap();
            let ma = depth_metrics(&a, &gt, None, DEFAULT_CAP).unwrap();
            let mb = depth_metrics(&b, &gt, None, DEFAULT_CAP).unwrap();
            for (x, y) in ma.row().iter().zip(mb.row()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
            let again = median_scale(&a, &gt, None).unwrap();
            prop_assert!(again.max_abs_diff(&a) <= 1e-12 * a.max());
        }
    }
}

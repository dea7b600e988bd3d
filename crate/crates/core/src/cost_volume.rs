//! Plane-sweep cost volumes over fronto-parallel depth hypotheses.
//!
//! Each hypothesis warps the source features with a constant depth map
//! through [`synthesize_target`], so the sweep shares the differentiable warp
//! used everywhere else.

use serde::{Deserialize, Serialize};

use crate::sampling::synthesize_target;
use crate::{Error, Graph, Intrinsics, PoseSE3, Result, Tensor, Var};

pub const DEFAULT_D_MIN: f64 = 0.1;
pub const DEFAULT_D_MAX: f64 = 10.0;
pub const DEFAULT_N_PLANES: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthPlanes {
    values: Vec<f64>,
}

impl DepthPlanes {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn as_tensor(&self) -> Tensor {
        Tensor::new(&[self.values.len(), 1, 1], self.values.clone()).expect("n >= 2")
    }
}

/// `n_planes` depths spaced linearly from `d_min` to `d_max` inclusive.
pub fn make_planes(d_min: f64, d_max: f64, n_planes: usize) -> Result<DepthPlanes> {
    if !(d_min > 0.0 && d_min < d_max && d_max.is_finite()) || n_planes < 2 {
        return Err(Error::InvalidParameter(format!(
            "depth planes need 0 < d_min < d_max and n >= 2, got ({d_min}, {d_max}, {n_planes})"
        )));
    }
    let step = (d_max - d_min) / (n_planes - 1) as f64;
    let mut values: Vec<f64> = (0..n_planes).map(|i| d_min + step * i as f64).collect();
    values[n_planes - 1] = d_max;
    Ok(DepthPlanes { values })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    Identity,
    /// Mean intensity plus absolute central differences along x and y.
    Gradient3,
}

/// Fixed feature maps for matching; `image` is `H x W x C` in `[0, 1]`.
pub fn extract_features(image: &Tensor, mode: FeatureMode) -> Result<Tensor> {
    if image.ndim() != 3 {
        return Err(Error::InvalidShape {
            shape: image.shape().to_vec(),
            reason: "image must be H x W x C".into(),
        });
    }
    match mode {
        FeatureMode::Identity => Ok(image.clone()),
        FeatureMode::Gradient3 => {
            let (h, w, c) = (image.height(), image.width(), image.channels());
            let gray = Tensor::from_fn2(h, w, |y, x| (0..c).map(|k| image.at3(y, x, k)).sum::<f64>() / c as f64);
            let at = |y: usize, x: usize| gray.at2(y, x);
            Ok(Tensor::from_fn3(h, w, 3, |y, x, k| {
                let v = match k {
                    0 => at(y, x),
                    1 => (at(y, (x + 1).min(w - 1)) - at(y, x.saturating_sub(1))).abs(),
                    _ => (at((y + 1).min(h - 1), x) - at(y.saturating_sub(1), x)).abs(),
                };
                v.clamp(0.0, 1.0)
            }))
        }
    }
}

pub struct CostVolume<'g> {
    /// `n_planes x H x W`, non-negative.
    pub costs: Var<'g>,
    /// `n_planes x H x W`, fraction of sources with a valid sample.
    pub coverage: Tensor,
}

/// Sweeps every plane: per pixel, the mean over valid sources of the
/// channel-mean absolute feature difference. Cells no source covers hold
/// the sentinel `max observed cost + 1`.
///
/// Each source is a feature map and the target-to-source pose.
pub fn build_cost_volume<'g>(
    f_t: Var<'g>,
    sources: &[(Var<'g>, Var<'g>)],
    intrinsics: Var<'g>,
    planes: &DepthPlanes,
) -> Result<CostVolume<'g>> {
    if sources.is_empty() {
        return Err(Error::Usage("cost volume needs at least one source".into()));
    }
    let shape = f_t.shape();
    if shape.len() != 3 {
        return Err(Error::InvalidShape {
            shape,
            reason: "features must be H x W x C".into(),
        });
    }
    for (f, _) in sources {
        if f.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "build_cost_volume",
                lhs: shape,
                rhs: f.shape(),
            });
        }
    }
    let g = f_t.graph();
    let (h, w) = (shape[0], shape[1]);
    let mut slices = Vec::with_capacity(planes.len());
    let mut counts = Vec::with_capacity(planes.len() * h * w);
    for &d in planes.values() {
        let depth = g.constant(Tensor::full(&[h, w], d));
        let mut num: Option<Var<'g>> = None;
        let mut count = Tensor::zeros(&[h, w]);
        for &(feat, pose) in sources {
            let view = synthesize_target(feat, depth, pose, intrinsics)?;
            let diff = view.image.sub(f_t)?.abs()?.mean_axis(2)?;
            let term = diff.mul(g.constant(view.oob_mask.clone()))?;
            num = Some(match num {
                Some(n) => n.add(term)?,
                None => term,
            });
            count = count.zip_map(&view.oob_mask, |a, b| a + b)?;
        }
        let inv = count.map(|c| if c > 0.0 { 1.0 / c } else { 0.0 });
        slices.push(num.expect("non-empty").mul(g.constant(inv))?);
        counts.extend_from_slice(count.data());
    }
    let raw = crate::autodiff::stack(&slices)?;
    let count = Tensor::new(&[planes.len(), h, w], counts)?;
    let n_src = sources.len() as f64;
    let coverage = count.map(|c| c / n_src);

    let values = raw.value();
    let observed = values
        .data()
        .iter()
        .zip(coverage.data())
        .filter(|(_, &c)| c > 0.0)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sentinel = if observed.is_finite() { observed + 1.0 } else { 1.0 };
    let fill = coverage.map(|c| if c > 0.0 { 0.0 } else { sentinel });
    let costs = raw.add(g.constant(fill))?;
    Ok(CostVolume { costs, coverage })
}

/// [`build_cost_volume`] on plain values; returns `(costs, coverage)`.
pub fn build_cost_volume_tensor(
    f_t: &Tensor,
    sources: &[(Tensor, PoseSE3)],
    intrinsics: &Intrinsics,
    planes: &DepthPlanes,
) -> Result<(Tensor, Tensor)> {
    let g = Graph::new();
    let src: Vec<_> = sources
        .iter()
        .map(|(f, p)| (g.constant(f.clone()), g.constant(p.to_tensor())))
        .collect();
    let vol = build_cost_volume(g.constant(f_t.clone()), &src, g.constant(intrinsics.to_tensor()), planes)?;
    Ok(((*vol.costs.value()).clone(), vol.coverage))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ArgminMode {
    /// Plane of minimal cost; ties go to the smaller depth.
    Hard,
    /// Softmin-weighted mean of the planes, `exp(-cost / temperature)`.
    Soft { temperature: f64 },
}

/// Per-pixel depth from the volume. Only the soft mode carries gradients.
/// Uncovered planes are left out of the softmin unless a pixel has no
/// coverage at all, in which case every plane takes part.
pub fn argmin_depth<'g>(vol: &CostVolume<'g>, planes: &DepthPlanes, mode: ArgminMode) -> Result<Var<'g>> {
    let costs = vol.costs.value();
    let shape = costs.shape().to_vec();
    if shape.len() != 3 || shape[0] != planes.len() {
        return Err(Error::ShapeMismatch {
            op: "argmin_depth",
            lhs: shape,
            rhs: vec![planes.len()],
        });
    }
    let (n, h, w) = (shape[0], shape[1], shape[2]);
    let hw = h * w;
    let g = vol.costs.graph();
    match mode {
        ArgminMode::Hard => {
            let cd = costs.data();
            let depth: Vec<f64> = (0..hw)
                .map(|i| {
                    let mut best = 0;
                    for k in 1..n {
                        if cd[k * hw + i] < cd[best * hw + i] {
                            best = k;
                        }
                    }
                    planes.values()[best]
                })
                .collect();
            Ok(g.constant(Tensor::new(&[h, w], depth)?))
        }
        ArgminMode::Soft { temperature } => {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
            }
            let cov = vol.coverage.data();
            let cd = costs.data();
            let mut include = vec![0.0; n * hw];
            let mut shift = vec![0.0; hw];
            for i in 0..hw {
                let any = (0..n).any(|k| cov[k * hw + i] > 0.0);
                let mut m = f64::INFINITY;
                for k in 0..n {
                    if !any || cov[k * hw + i] > 0.0 {
                        include[k * hw + i] = 1.0;
                        m = m.min(cd[k * hw + i]);
                    }
                }
                shift[i] = m;
            }
            // Subtracting the per-pixel minimum keeps exp() in range and
            // leaves the normalized weights unchanged.
            let weights = vol
                .costs
                .sub(g.constant(Tensor::new(&[h, w], shift)?))?
                .mul_scalar(-1.0 / temperature)?
                .exp()?
                .mul(g.constant(Tensor::new(&[n, h, w], include)?))?;
            let num = weights.mul(g.constant(planes.as_tensor()))?.sum_axis(0)?;
            num.div(weights.sum_axis(0)?)
        }
    }
}

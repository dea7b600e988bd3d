//! Self-supervision terms: SSIM, the photometric mix, visibility-weighted
//! data fidelity, residual-based and edge-aware smoothness, the auxiliary
//! flow term, log-depth consistency and their weighted total.
//!
//! Every sum over pixels is a weighted mean (sum divided by the sum of the
//! weights), so the weights below do not depend on image size.

use serde::{Deserialize, Serialize};

use crate::sampling::SynthesizedView;
use crate::{Error, Result, Tensor, Var};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const SSIM_WINDOW: usize = 3;

/// Penalty added to a source's photometric error where it is not visible,
/// so the per-pixel minimum prefers visible sources.
const HIDDEN_PENALTY: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// SSIM share of the photometric error.
    pub alpha: f64,
    /// Weight of the whole regularizer.
    pub kappa: f64,
    /// Residual-based smoothness of the calibration image.
    pub lambda1: f64,
    /// Auxiliary flow-reconstruction term.
    pub lambda2: f64,
    /// Edge-aware depth smoothness.
    pub lambda3: f64,
    /// Depth consistency against the cost-volume depth.
    pub mu: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            kappa: 1.0,
            lambda1: 0.01,
            lambda2: 0.001,
            lambda3: 0.0001,
            mu: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.kappa, self.lambda1, self.lambda2, self.lambda3, self.mu];
        if !(0.0..=1.0).contains(&self.alpha) || all.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "loss weights need 0 <= alpha <= 1 and non-negative weights, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// How per-source photometric errors are combined per pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceAggregation {
    /// Per-pixel minimum over the visible sources.
    #[default]
    Min,
    /// Visibility-weighted mean over sources.
    Mean,
}

pub struct SupervisionInputs<'g> {
    /// `H x W x C` target frame.
    pub target: Var<'g>,
    /// One synthesized view per source frame.
    pub synthesized: Vec<SynthesizedView<'g>>,
    /// Target reconstructed by optical flow, for the auxiliary term.
    pub flow_synthesized: Option<Var<'g>>,
    /// Additive brightness calibration of the target; zero when absent.
    pub calibration: Option<Var<'g>>,
    /// `H x W` visibility in `[0, 1]`; multiplied with each view's mask.
    pub visibility: Option<Tensor>,
    pub aggregation: SourceAggregation,
}

impl<'g> SupervisionInputs<'g> {
    pub fn new(target: Var<'g>, view: SynthesizedView<'g>) -> Self {
        Self {
            target,
            synthesized: vec![view],
            flow_synthesized: None,
            calibration: None,
            visibility: None,
            aggregation: SourceAggregation::Min,
        }
    }

    fn check(&self) -> Result<()> {
        let shape = self.target.shape();
        if shape.len() != 3 {
            return Err(Error::InvalidShape {
                shape,
                reason: "target must be H x W x C".into(),
            });
        }
        if self.synthesized.is_empty() {
            return Err(Error::Usage("supervision needs at least one synthesized view".into()));
        }
        for v in &self.synthesized {
            same_shape("supervision", &shape, &v.image.shape())?;
            same_shape("supervision", &shape[..2], v.oob_mask.shape())?;
        }
        if let Some(f) = &self.flow_synthesized {
            same_shape("supervision", &shape, &f.shape())?;
        }
        if let Some(c) = &self.calibration {
            let cs = c.shape();
            if cs.len() != 3 || cs[..2] != shape[..2] || (cs[2] != 1 && cs[2] != shape[2]) {
                return Err(Error::ShapeMismatch {
                    op: "calibration",
                    lhs: shape,
                    rhs: cs,
                });
            }
        }
        if let Some(v) = &self.visibility {
            same_shape("visibility", &shape[..2], v.shape())?;
            if v.data().iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(Error::InvalidParameter("visibility must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    Ok(())
}

fn channel_mean(v: Var<'_>) -> Result<Var<'_>> {
    if v.shape().len() == 3 {
        v.mean_axis(2)
    } else {
        Ok(v)
    }
}

/// Per-pixel, per-channel SSIM over a 3x3 reflection-padded box window.
pub fn ssim<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    same_shape("ssim", &a.shape(), &b.shape())?;
    let g = a.graph();
    let mu_a = a.box_filter(SSIM_WINDOW)?;
    let mu_b = b.box_filter(SSIM_WINDOW)?;
    let mu_a2 = mu_a.square()?;
    let mu_b2 = mu_b.square()?;
    let mu_ab = mu_a.mul(mu_b)?;
    let var_a = a.square()?.box_filter(SSIM_WINDOW)?.sub(mu_a2)?;
    let var_b = b.square()?.box_filter(SSIM_WINDOW)?.sub(mu_b2)?;
    let cov = a.mul(b)?.box_filter(SSIM_WINDOW)?.sub(mu_ab)?;
    let two = g.scalar(2.0);
    let num = two
        .mul(mu_ab)?
        .add_scalar(SSIM_C1)?
        .mul(two.mul(cov)?.add_scalar(SSIM_C2)?)?;
    let den = mu_a2
        .add(mu_b2)?
        .add_scalar(SSIM_C1)?
        .mul(var_a.add(var_b)?.add_scalar(SSIM_C2)?)?;
    num.div(den)
}

/// `alpha (1 - SSIM)/2 + (1 - alpha) |a - b|`, both averaged over channels;
/// returns an `H x W` map.
pub fn photometric_phi<'g>(a: Var<'g>, b: Var<'g>, alpha: f64) -> Result<Var<'g>> {
    same_shape("photometric_phi", &a.shape(), &b.shape())?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let l1 = || channel_mean(a.sub(b)?.abs()?);
    let structural = || {
        let dssim = ssim(a, b)?.neg()?.add_scalar(1.0)?.mul_scalar(0.5)?.clamp(0.0, 1.0)?;
        channel_mean(dssim)
    };
    if alpha == 0.0 {
        return l1();
    }
    if alpha == 1.0 {
        return structural();
    }
    structural()?
        .mul_scalar(alpha)?
        .add(l1()?.mul_scalar(1.0 - alpha)?)
}

fn weighted_mean<'g>(map: Var<'g>, weights: &Tensor) -> Result<Var<'g>> {
    let total = weights.sum();
    if total <= 0.0 {
        return Err(Error::NoVisiblePixels);
    }
    map.mul(map.graph().constant(weights.clone()))?
        .sum()?
        .mul_scalar(1.0 / total)
}

fn calibrated_target<'g>(inp: &SupervisionInputs<'g>) -> Result<Var<'g>> {
    match inp.calibration {
        Some(c) => inp.target.add(c),
        None => Ok(inp.target),
    }
}

/// Replaces out-of-view pixels of a synthesized view with the reference so
/// they do not distort SSIM windows of their visible neighbours.
fn neutral_fill<'g>(view: &SynthesizedView<'g>, reference: Var<'g>) -> Result<Var<'g>> {
    if view.oob_mask.data().iter().all(|&m| m == 1.0) {
        return Ok(view.image);
    }
    let hole = view.oob_mask.map(|m| 1.0 - m).unsqueeze_last();
    view.image.add(reference.mul(reference.graph().constant(hole))?)
}

fn source_weights(inp: &SupervisionInputs<'_>, view: &SynthesizedView<'_>) -> Tensor {
    match &inp.visibility {
        Some(v) => v.zip_map(&view.oob_mask, |a, b| a * b).expect("checked shapes"),
        None => view.oob_mask.clone(),
    }
}

/// Aggregated photometric map over all sources and its pixel weights.
fn aggregated_phi<'g>(inp: &SupervisionInputs<'g>, alpha: f64) -> Result<(Var<'g>, Tensor)> {
    let reference = calibrated_target(inp)?;
    let g = inp.target.graph();
    let mut maps = Vec::with_capacity(inp.synthesized.len());
    for view in &inp.synthesized {
        let phi = photometric_phi(neutral_fill(view, reference)?, reference, alpha)?;
        maps.push((phi, source_weights(inp, view)));
    }
    if maps.len() == 1 {
        return Ok(maps.pop().expect("one map"));
    }
    match inp.aggregation {
        SourceAggregation::Min => {
            let mut best: Option<Var<'g>> = None;
            let mut weight = Tensor::zeros(maps[0].1.shape());
            for (phi, w) in &maps {
                let hidden = w.map(|v| if v > 0.0 { 0.0 } else { HIDDEN_PENALTY });
                let penalized = phi.add(g.constant(hidden))?;
                best = Some(match best {
                    Some(b) => b.minimum(penalized)?,
                    None => penalized,
                });
                weight = weight.zip_map(w, f64::max)?;
            }
            Ok((best.expect("several maps"), weight))
        }
        SourceAggregation::Mean => {
            let mut num: Option<Var<'g>> = None;
            let mut weight = Tensor::zeros(maps[0].1.shape());
            for (phi, w) in &maps {
                let term = phi.mul(g.constant(w.clone()))?;
                num = Some(match num {
                    Some(n) => n.add(term)?,
                    None => term,
                });
                weight = weight.zip_map(w, |a, b| a + b)?;
            }
            // Per-pixel weighted mean, weighted overall by total visibility.
            let safe = weight.map(|w| if w > 0.0 { 1.0 / w } else { 0.0 });
            let phi = num.expect("several maps").mul(g.constant(safe))?;
            Ok((phi, weight))
        }
    }
}

/// Visibility-weighted photometric error between the synthesized views and
/// the calibrated target `target + C`.
pub fn data_fidelity<'g>(inp: &SupervisionInputs<'g>, weights: &LossWeights) -> Result<Var<'g>> {
    inp.check()?;
    let (phi, w) = aggregated_phi(inp, weights.alpha)?;
    weighted_mean(phi, &w)
}

/// The data-fidelity formula applied to the flow-reconstructed target.
pub fn auxiliary_loss<'g>(inp: &SupervisionInputs<'g>, weights: &LossWeights) -> Result<Var<'g>> {
    inp.check()?;
    let flow = inp
        .flow_synthesized
        .ok_or_else(|| Error::Usage("auxiliary loss needs a flow-synthesized target".into()))?;
    let reference = calibrated_target(inp)?;
    let phi = photometric_phi(flow, reference, weights.alpha)?;
    let w = aggregated_weights(inp);
    weighted_mean(phi, &w)
}

fn aggregated_weights(inp: &SupervisionInputs<'_>) -> Tensor {
    let mut views = inp.synthesized.iter().map(|v| source_weights(inp, v));
    let first = views.next().expect("checked non-empty");
    match inp.aggregation {
        SourceAggregation::Min => views.fold(first, |acc, w| acc.zip_map(&w, f64::max).expect("shape")),
        SourceAggregation::Mean => views.fold(first, |acc, w| acc.zip_map(&w, |a, b| a + b).expect("shape")),
    }
}

/// Mean over all x- and y-neighbour pairs of `|∇field|` damped by
/// `exp(-|∇guide|)`, pairing axes (x with x, y with y). Channels are
/// averaged before weighting.
fn guided_smoothness<'g>(field: Var<'g>, guide: Var<'g>) -> Result<Var<'g>> {
    let fx = channel_mean(field.grad_x()?.abs()?)?;
    let fy = channel_mean(field.grad_y()?.abs()?)?;
    let wx = channel_mean(guide.grad_x()?.abs()?)?.neg()?.exp()?;
    let wy = channel_mean(guide.grad_y()?.abs()?)?.neg()?.exp()?;
    let edges = (fx.value().len() + fy.value().len()) as f64;
    fx.mul(wx)?
        .sum()?
        .add(fy.mul(wy)?.sum()?)?
        .mul_scalar(1.0 / edges)
}

/// Smoothness of the calibration image `C`, relaxed across edges of the
/// photometric residual `target - synthesized`.
pub fn residual_smoothness<'g>(c: Var<'g>, target: Var<'g>, synthesized: Var<'g>) -> Result<Var<'g>> {
    let ts = target.shape();
    same_shape("residual_smoothness", &ts, &synthesized.shape())?;
    same_shape("residual_smoothness", &ts[..2], &c.shape()[..2.min(c.shape().len())])?;
    let residual = target.sub(synthesized)?;
    guided_smoothness(c, residual)
}

/// Smoothness of the mean-normalized depth, relaxed across image edges.
pub fn edge_aware_smoothness<'g>(depth: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    let d = depth.value();
    if d.ndim() != 2 {
        return Err(Error::InvalidShape {
            shape: d.shape().to_vec(),
            reason: "depth must be H x W".into(),
        });
    }
    same_shape("edge_aware_smoothness", d.shape(), &target.shape()[..2])?;
    if let Some(&bad) = d.data().iter().find(|&&v| v <= 0.0) {
        return Err(Error::domain("edge_aware_smoothness", format!("non-positive depth {bad}")));
    }
    let normalized = depth.div(depth.mean()?)?;
    guided_smoothness(normalized, target)
}

/// Mean absolute log-depth difference.
pub fn depth_consistency<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    same_shape("depth_consistency", &a.shape(), &b.shape())?;
    for v in [a, b] {
        if let Some(&bad) = v.value().data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::domain("depth_consistency", format!("non-positive depth {bad}")));
        }
    }
    a.log()?.sub(b.log()?)?.abs()?.mean()
}

/// Unweighted value of every term; absent terms are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data: f64,
    pub residual_smoothness: f64,
    pub auxiliary: f64,
    pub edge_smoothness: f64,
    pub consistency: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Recombines the terms with `weights`; equals `total` up to rounding.
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        self.data
            + w.kappa
                * (w.lambda1 * self.residual_smoothness
                    + w.lambda2 * self.auxiliary
                    + w.lambda3 * self.edge_smoothness)
            + w.mu * self.consistency
    }
}

/// `D + kappa (lambda1 L_rs + lambda2 L_ax + lambda3 L_es) + mu L_c`.
///
/// `L_rs` needs a calibration image, `L_ax` a flow-synthesized target and
/// `L_c` a cost-volume depth; each is skipped when its input is absent.
/// The residual for `L_rs` uses the first synthesized view.
pub fn total_loss<'g>(
    inp: &SupervisionInputs<'g>,
    depth: Var<'g>,
    cost_volume_depth: Option<Var<'g>>,
    weights: &LossWeights,
) -> Result<(Var<'g>, LossBreakdown)> {
    weights.validate()?;
    let mut breakdown = LossBreakdown::default();
    let data = data_fidelity(inp, weights)?;
    breakdown.data = data.value().item();

    let mut reg: Option<Var<'g>> = None;
    let push = |reg: &mut Option<Var<'g>>, term: Var<'g>, w: f64| -> Result<()> {
        let t = term.mul_scalar(w)?;
        *reg = Some(match reg.take() {
            Some(r) => r.add(t)?,
            None => t,
        });
        Ok(())
    };
    if let Some(c) = inp.calibration {
        let rs = residual_smoothness(c, inp.target, inp.synthesized[0].image)?;
        breakdown.residual_smoothness = rs.value().item();
        push(&mut reg, rs, weights.lambda1)?;
    }
    if inp.flow_synthesized.is_some() {
        let ax = auxiliary_loss(inp, weights)?;
        breakdown.auxiliary = ax.value().item();
        push(&mut reg, ax, weights.lambda2)?;
    }
    let es = edge_aware_smoothness(depth, inp.target)?;
    breakdown.edge_smoothness = es.value().item();
    push(&mut reg, es, weights.lambda3)?;

    let mut total = data.add(reg.expect("edge term always present").mul_scalar(weights.kappa)?)?;
    if let Some(dc) = cost_volume_depth {
        let cons = depth_consistency(depth, dc)?;
        breakdown.consistency = cons.value().item();
        total = total.add(cons.mul_scalar(weights.mu)?)?;
    }
    breakdown.total = total.value().item();
    Ok((total, breakdown))
}

//! Differentiable bilinear sampling and inverse-warp view synthesis.

use crate::camera::{warp_coords, EDGE_SLACK};
use crate::{Error, Graph, Intrinsics, PoseSE3, Result, Tensor, Var};

/// A source image resampled into the target frame.
pub struct SynthesizedView<'g> {
    /// `H x W x C`, zero where `oob_mask` is 0.
    pub image: Var<'g>,
    /// `H x W`, 1 where all four sampling corners are inside the source.
    pub oob_mask: Tensor,
}

/// Samples `src` (`Hs x Ws x C`) at `coords` (`H x W x 2`, `(u, v)` order).
///
/// A coordinate inside `[0, Ws-1] x [0, Hs-1]` interpolates its four
/// surrounding pixel centers; on the last row/column the cell to the
/// upper-left is used so the far corners carry zero weight. Anything outside
/// is zero-filled and masked out. Differentiable in both `src` and `coords`.
pub fn bilinear_sample<'g>(src: Var<'g>, coords: Var<'g>) -> Result<SynthesizedView<'g>> {
    let s = src.value();
    let c = coords.value();
    if s.ndim() != 3 || c.ndim() != 3 || c.shape()[2] != 2 {
        return Err(Error::ShapeMismatch {
            op: "bilinear_sample",
            lhs: s.shape().to_vec(),
            rhs: c.shape().to_vec(),
        });
    }
    if !c.all_finite() {
        return Err(Error::domain("bilinear_sample", "non-finite coordinates"));
    }
    let (hs, ws, ch) = (s.shape()[0], s.shape()[1], s.shape()[2]);
    if hs < 2 || ws < 2 {
        return Err(Error::InvalidShape {
            shape: s.shape().to_vec(),
            reason: "source must be at least 2x2".into(),
        });
    }
    let (h, w) = (c.shape()[0], c.shape()[1]);
    let n = h * w;

    // Per output pixel: top-left corner index and fractional offsets.
    let mut cells: Vec<Option<(usize, f64, f64)>> = Vec::with_capacity(n);
    let mut out = vec![0.0; n * ch];
    let mut mask = vec![0.0; n];
    let sd = s.data();
    for i in 0..n {
        let (u, v) = (c.data()[2 * i], c.data()[2 * i + 1]);
        let (umax, vmax) = ((ws - 1) as f64, (hs - 1) as f64);
        if !(-EDGE_SLACK..=umax + EDGE_SLACK).contains(&u) || !(-EDGE_SLACK..=vmax + EDGE_SLACK).contains(&v) {
            cells.push(None);
            continue;
        }
        let (u, v) = (u.clamp(0.0, umax), v.clamp(0.0, vmax));
        let x0 = (u.floor() as usize).min(ws - 2);
        let y0 = (v.floor() as usize).min(hs - 2);
        let (ax, ay) = (u - x0 as f64, v - y0 as f64);
        let base = y0 * ws + x0;
        for k in 0..ch {
            let a = sd[base * ch + k];
            let b = sd[(base + 1) * ch + k];
            let cc = sd[(base + ws) * ch + k];
            let d = sd[(base + ws + 1) * ch + k];
            out[i * ch + k] = (1.0 - ax) * (1.0 - ay) * a + ax * (1.0 - ay) * b + (1.0 - ax) * ay * cc + ax * ay * d;
        }
        mask[i] = 1.0;
        cells.push(Some((base, ax, ay)));
    }
    let out = Tensor::new(&[h, w, ch], out)?;
    let oob_mask = Tensor::new(&[h, w], mask)?;
    let src_shape = s.shape().to_vec();
    let image = src.graph().record("bilinear_sample", out, &[src, coords], move |g| {
        let gd = g.data();
        let sd = s.data();
        let mut g_src = vec![0.0; sd.len()];
        let mut g_coords = vec![0.0; 2 * n];
        for (i, cell) in cells.iter().enumerate() {
            let Some((base, ax, ay)) = *cell else {
                continue;
            };
            let (mut gu, mut gv) = (0.0, 0.0);
            for k in 0..ch {
                let go = gd[i * ch + k];
                let ia = base * ch + k;
                let ib = (base + 1) * ch + k;
                let ic = (base + ws) * ch + k;
                let id = (base + ws + 1) * ch + k;
                g_src[ia] += go * (1.0 - ax) * (1.0 - ay);
                g_src[ib] += go * ax * (1.0 - ay);
                g_src[ic] += go * (1.0 - ax) * ay;
                g_src[id] += go * ax * ay;
                let (a, b, cc, d) = (sd[ia], sd[ib], sd[ic], sd[id]);
                gu += go * ((1.0 - ay) * (b - a) + ay * (d - cc));
                gv += go * ((1.0 - ax) * (cc - a) + ax * (d - b));
            }
            g_coords[2 * i] = gu;
            g_coords[2 * i + 1] = gv;
        }
        vec![
            Tensor::new(&src_shape, g_src).expect("shape"),
            Tensor::new(&[h, w, 2], g_coords).expect("shape"),
        ]
    })?;
    Ok(SynthesizedView { image, oob_mask })
}

/// Reconstructs the target frame from `source` using the target depth, the
/// target-to-source pose and the intrinsics.
pub fn synthesize_target<'g>(
    source: Var<'g>,
    depth: Var<'g>,
    pose: Var<'g>,
    intrinsics: Var<'g>,
) -> Result<SynthesizedView<'g>> {
    let warp = warp_coords(depth, pose, intrinsics)?;
    let view = bilinear_sample(source, warp.coords)?;
    let oob_mask = view.oob_mask.zip_map(&warp.valid, |a, b| a * b)?;
    Ok(SynthesizedView {
        image: view.image,
        oob_mask,
    })
}

/// [`synthesize_target`] on plain values; returns the image and its mask.
pub fn synthesize_target_tensor(
    source: &Tensor,
    depth: &Tensor,
    pose: &PoseSE3,
    intrinsics: &Intrinsics,
) -> Result<(Tensor, Tensor)> {
    let g = Graph::new();
    let view = synthesize_target(
        g.constant(source.clone()),
        g.constant(depth.clone()),
        g.constant(pose.to_tensor()),
        g.constant(intrinsics.to_tensor()),
    )?;
    let image = (*view.image.value()).clone();
    Ok((image, view.oob_mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradient, FdOptions};
    use proptest::prelude::*;

    fn grid_coords(h: usize, w: usize) -> Tensor {
        Tensor::from_fn3(h, w, 2, |y, x, c| if c == 0 { x as f64 } else { y as f64 })
    }

    fn texture(h: usize, w: usize, ch: usize) -> Tensor {
        Tensor::from_fn3(h, w, ch, |y, x, c| {
            0.5 + 0.3 * (0.4 * x as f64 + 0.3 * y as f64 + c as f64).sin()
        })
    }

    #[test]
    fn grid_coordinates_reproduce_source() {
        let g = Graph::new();
        let src = texture(5, 6, 3);
        let view = bilinear_sample(g.constant(src.clone()), g.constant(grid_coords(5, 6))).unwrap();
        assert_eq!(*view.image.value(), src);
        assert!(view.oob_mask.data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn midpoint_is_average() {
        let g = Graph::new();
        let src = Tensor::new(&[2, 2, 1], vec![0.2, 0.6, 0.0, 0.0]).unwrap();
        let coords = Tensor::new(&[1, 1, 2], vec![0.5, 0.0]).unwrap();
        let view = bilinear_sample(g.constant(src), g.constant(coords)).unwrap();
        assert!((view.image.value().item() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn out_of_bounds_is_zero_filled() {
        let g = Graph::new();
        let src = Tensor::full(&[3, 3, 1], 0.7);
        let coords = Tensor::new(&[1, 3, 2], vec![-0.1, 1.0, 2.0, 2.0, 2.01, 0.0]).unwrap();
        let view = bilinear_sample(g.constant(src), g.constant(coords)).unwrap();
        assert_eq!(view.image.value().data(), &[0.0, 0.7, 0.0]);
        assert_eq!(view.oob_mask.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn ramp_coordinate_gradient_is_slope() {
        // Oracle: d/du of a bilinear ramp a*u + b*v is a (and b for v).
        let (a, b) = (0.03, -0.02);
        let src = Tensor::from_fn3(8, 9, 1, |y, x, _| 0.5 + a * x as f64 + b * y as f64);
        let coords = Tensor::from_fn3(5, 6, 2, |y, x, c| {
            if c == 0 {
                1.3 + x as f64 * 1.1
            } else {
                0.7 + y as f64 * 1.2
            }
        });
        let g = Graph::new();
        let cv = g.param(coords);
        let view = bilinear_sample(g.constant(src), cv).unwrap();
        let grads = g.backward(view.image.sum().unwrap(), &[cv]).unwrap();
        let gc = grads.get(cv).unwrap();
        for i in 0..30 {
            assert!((gc.data()[2 * i] - a).abs() < 1e-12);
            assert!((gc.data()[2 * i + 1] - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let src = texture(6, 7, 2);
        let coords = Tensor::from_fn3(4, 4, 2, |y, x, c| {
            if c == 0 {
                0.37 + 1.41 * x as f64
            } else {
                0.23 + 1.29 * y as f64
            }
        });
        let opts = FdOptions::default();
        let c2 = coords.clone();
        let r = check_gradient(
            move |s| {
                let g = s.graph();
                bilinear_sample(s, g.constant(c2.clone()))?.image.square()?.mean()
            },
            &src,
            &opts,
        )
        .unwrap();
        assert!(r.passed, "src: {r}");
        let r = check_gradient(
            move |c| bilinear_sample(c.graph().constant(src.clone()), c)?.image.square()?.mean(),
            &coords,
            &opts,
        )
        .unwrap();
        assert!(r.passed, "coords: {r}");
    }

    #[test]
    fn identity_pose_synthesis_returns_source() {
        let src = texture(6, 8, 1);
        let depth = Tensor::full(&[6, 8], 3.0);
        let k = Intrinsics::new(0.82, 1.02, 0.5, 0.5).unwrap();
        let (img, mask) = synthesize_target_tensor(&src, &depth, &PoseSE3::identity(), &k).unwrap();
        assert!(img.max_abs_diff(&src) < 1e-12);
        assert!(mask.data().iter().all(|&m| m == 1.0));
    }

    proptest! {
        #[test]
        fn sample_is_convex_combination(u in 0.0f64..4.0, v in 0.0f64..3.0, vals in prop::collection::vec(0.0f64..1.0, 20)) {
            let g = Graph::new();
            let src = Tensor::new(&[4, 5, 1], vals.clone()).unwrap();
            let coords = g.param(Tensor::new(&[1, 1, 2], vec![u, v]).unwrap());
            let s = g.param(src.clone());
            let view = bilinear_sample(s, coords).unwrap();
            let out = view.image.value().item();
            let x0 = (u.floor() as usize).min(3);
            let y0 = (v.floor() as usize).min(2);
            let corners = [src.at3(y0, x0, 0), src.at3(y0, x0 + 1, 0), src.at3(y0 + 1, x0, 0), src.at3(y0 + 1, x0 + 1, 0)];
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out >= lo - 1e-12 && out <= hi + 1e-12);
            // Weights over the corners form a partition of unity.
            let gs = g.backward(view.image.sum().unwrap(), &[s]).unwrap();
            prop_assert!((gs.get(s).unwrap().sum() - 1.0).abs() < 1e-12);
        }
    }
}

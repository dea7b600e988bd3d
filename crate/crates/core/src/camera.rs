//! Pinhole intrinsics, axis-angle rigid motion, and the differentiable
//! target-to-source pixel warp.
//!
//! Pixel convention: integer coordinates sit on pixel centers, origin at the
//! top-left, `u` along the width and `v` along the height.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Tensor, Var};

/// Normalized pinhole parameters: focal lengths divided by image width and
/// height, principal point as a fraction of width and height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < 1.0
            && self.cy > 0.0
            && self.cy < 1.0
            && self.to_array().iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "intrinsics need fx, fy > 0 and 0 < cx, cy < 1, got {self:?}"
            )))
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.fx, self.fy, self.cx, self.cy]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            fx: a[0],
            fy: a[1],
            cx: a[2],
            cy: a[3],
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.to_array().to_vec())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.data() {
            &[fx, fy, cx, cy] => Ok(Self { fx, fy, cx, cy }),
            _ => Err(Error::InvalidShape {
                shape: t.shape().to_vec(),
                reason: "intrinsics are a 4-vector (fx, fy, cx, cy)".into(),
            }),
        }
    }

    /// `K` in pixel units for `grid`.
    pub fn pixel_matrix(&self, grid: PixelGrid) -> Matrix3<f64> {
        let (w, h) = (grid.width as f64, grid.height as f64);
        Matrix3::new(
            self.fx * w,
            0.0,
            self.cx * w,
            0.0,
            self.fy * h,
            self.cy * h,
            0.0,
            0.0,
            1.0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelGrid {
    pub width: usize,
    pub height: usize,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidParameter(format!(
                "pixel grid must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn of(t: &Tensor) -> Result<Self> {
        if t.ndim() < 2 {
            return Err(Error::InvalidShape {
                shape: t.shape().to_vec(),
                reason: "expected an H x W map".into(),
            });
        }
        Self::new(t.width(), t.height())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

impl Default for PixelGrid {
    fn default() -> Self {
        Self {
            width: 320,
            height: 256,
        }
    }
}

/// Rigid transform `x -> R(rotation) x + translation`, rotation as an
/// axis-angle vector with norm at most pi.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSE3 {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: [0.0; 3],
            translation: [0.0; 3],
        }
    }

    /// Builds a pose, wrapping the rotation onto its canonical representative.
    pub fn new(rotation: [f64; 3], translation: [f64; 3]) -> Self {
        let w = Vector3::from(rotation);
        let rotation = if w.norm() < std::f64::consts::PI {
            rotation
        } else {
            rotation_log(&rodrigues(&w)).into()
        };
        Self { rotation, translation }
    }

    pub fn from_matrix(r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        Self {
            rotation: rotation_log(r).into(),
            translation: (*t).into(),
        }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new([a[0], a[1], a[2]], [a[3], a[4], a[5]])
    }

    pub fn to_array(&self) -> [f64; 6] {
        let [rx, ry, rz] = self.rotation;
        let [tx, ty, tz] = self.translation;
        [rx, ry, rz, tx, ty, tz]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.to_array().to_vec())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let a: [f64; 6] = t.data().try_into().map_err(|_| Error::InvalidShape {
            shape: t.shape().to_vec(),
            reason: "poses are a 6-vector (rx, ry, rz, tx, ty, tz)".into(),
        })?;
        Ok(Self::from_array(a))
    }

    pub fn rotation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.rotation)
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rodrigues(&self.rotation_vector())
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation_vector()
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        let ra = self.rotation_matrix();
        let r = ra * other.rotation_matrix();
        let t = ra * other.translation_vector() + self.translation_vector();
        Self::from_matrix(&r, &t)
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation_matrix().transpose();
        Self::from_matrix(&rt, &(-(rt * self.translation_vector())))
    }

    pub fn is_identity(&self) -> bool {
        self.to_array().iter().all(|&v| v == 0.0)
    }
}

pub fn pose_compose(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    a.compose(b)
}

pub fn pose_inverse(a: &PoseSE3) -> PoseSE3 {
    a.inverse()
}

fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rotation matrix of an axis-angle vector (Rodrigues' formula).
pub fn rodrigues(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let (a, b) = if theta2 < 1e-8 {
        // Taylor expansions of sin(t)/t and (1 - cos(t))/t^2.
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(w);
    Matrix3::identity() + k * a + k * k * b
}

/// Axis-angle vector of a rotation matrix, norm in `[0, pi]`.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let skew = vee(&(r - r.transpose())); // 2 sin(theta) * axis
    let s = 0.5 * skew.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if theta < 1e-10 {
        return 0.5 * skew;
    }
    if c > 0.0 {
        return skew * (theta / (2.0 * s));
    }
    // Near pi the skew part vanishes; read the axis off the symmetric part,
    // (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) a a^T.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
    let aat = sym / (1.0 - c);
    let (col, _) = (0..3)
        .map(|i| (i, aat[(i, i)]))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let mut axis: Vector3<f64> = aat.column(col).into();
    axis /= axis.norm();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Derivatives of `rodrigues(w)` with respect to each component of `w`.
pub fn rodrigues_jacobian(w: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let basis = [Vector3::x(), Vector3::y(), Vector3::z()];
    let theta2 = w.norm_squared();
    if theta2 < 1e-14 {
        return basis.map(|e| hat(&e));
    }
    let r = rodrigues(w);
    let k = hat(w);
    let i_minus_r = Matrix3::identity() - r;
    basis.map(|e| {
        let i = e.dot(w);
        let cross = w.cross(&(i_minus_r * e));
        (k * i + hat(&cross)) / theta2 * r
    })
}

/// 3-D point seen at pixel `p` with depth `d`: `d K^-1 (u, v, 1)`.
pub fn unproject(p: &Vector2<f64>, depth: f64, k: &Matrix3<f64>) -> Result<Vector3<f64>> {
    if depth <= 0.0 || !depth.is_finite() {
        return Err(Error::domain("unproject", format!("depth must be positive, got {depth}")));
    }
    let (fx, fy, cx, cy) = (k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)]);
    Ok(Vector3::new(
        depth * (p.x - cx) / fx,
        depth * (p.y - cy) / fy,
        depth,
    ))
}

/// Pixel coordinates of a camera-frame point; `None` when it is not in
/// front of the camera.
pub fn project(point: &Vector3<f64>, k: &Matrix3<f64>) -> Option<Vector2<f64>> {
    if point.z <= 0.0 {
        return None;
    }
    let h = k * point;
    Some(Vector2::new(h.x / h.z, h.y / h.z))
}

pub fn transform(point: &Vector3<f64>, pose: &PoseSE3) -> Vector3<f64> {
    pose.transform(point)
}

/// Output of [`warp_coords`].
pub struct Warp<'g> {
    /// `H x W x 2` source coordinates `(u, v)` of every target pixel.
    pub coords: Var<'g>,
    /// `H x W`, 1 where the point is in front of the source camera and lands
    /// inside `[0, W-1] x [0, H-1]`.
    pub valid: Tensor,
}

/// Coordinates written for points behind the source camera.
const BEHIND_CAMERA: f64 = -1.0;
const MIN_Z: f64 = 1e-9;
/// Rounding allowance at the image border: a pixel that maps onto the last
/// row or column up to float error still counts as inside.
pub(crate) const EDGE_SLACK: f64 = 1e-9;

/// Maps every target pixel into the source view:
/// `p' ~ K (R D K^-1 p + t)`, differentiable in the `H x W` depth, the
/// 6-vector pose `(rx, ry, rz, tx, ty, tz)` and the 4-vector normalized
/// intrinsics `(fx, fy, cx, cy)`.
pub fn warp_coords<'g>(depth: Var<'g>, pose: Var<'g>, intrinsics: Var<'g>) -> Result<Warp<'g>> {
    let d = depth.value();
    let grid = PixelGrid::of(&d)?;
    if d.ndim() != 2 {
        return Err(Error::InvalidShape {
            shape: d.shape().to_vec(),
            reason: "depth must be H x W".into(),
        });
    }
    if let Some(&bad) = d.data().iter().find(|&&v| v <= 0.0) {
        return Err(Error::domain("warp_coords", format!("non-positive depth {bad}")));
    }
    let pose_t = pose.value();
    let intr_t = intrinsics.value();
    let p = PoseSE3::from_tensor(&pose_t).map(|_| pose_t.data())?;
    let k = Intrinsics::from_tensor(&intr_t)?;
    if k.fx <= 0.0 || k.fy <= 0.0 {
        return Err(Error::domain("warp_coords", format!("non-positive focal length in {k:?}")));
    }

    // Raw (un-wrapped) rotation so the derivative matches the parameter.
    let w = Vector3::new(p[0], p[1], p[2]);
    let t = Vector3::new(p[3], p[4], p[5]);
    let r = rodrigues(&w);
    let (wf, hf) = (grid.width as f64, grid.height as f64);
    let (fxp, fyp, cxp, cyp) = (k.fx * wf, k.fy * hf, k.cx * wf, k.cy * hf);

    let n = grid.pixels();
    let mut coords = vec![0.0; 2 * n];
    let mut valid = vec![0.0; n];
    // Per-pixel camera-frame points, kept for the backward pass.
    let mut points = vec![Vector3::zeros(); n];
    let mut transformed = vec![Vector3::zeros(); n];
    for y in 0..grid.height {
        for x in 0..grid.width {
            let i = y * grid.width + x;
            let dv = d.data()[i];
            let pt = Vector3::new(dv * (x as f64 - cxp) / fxp, dv * (y as f64 - cyp) / fyp, dv);
            let q = r * pt + t;
            points[i] = pt;
            transformed[i] = q;
            if q.z <= MIN_Z {
                coords[2 * i] = BEHIND_CAMERA;
                coords[2 * i + 1] = BEHIND_CAMERA;
                continue;
            }
            let u = fxp * q.x / q.z + cxp;
            let v = fyp * q.y / q.z + cyp;
            coords[2 * i] = u;
            coords[2 * i + 1] = v;
            if (-EDGE_SLACK..=wf - 1.0 + EDGE_SLACK).contains(&u) && (-EDGE_SLACK..=hf - 1.0 + EDGE_SLACK).contains(&v) {
                valid[i] = 1.0;
            }
        }
    }
    let out = Tensor::new(&[grid.height, grid.width, 2], coords)?;
    let valid = Tensor::new(&[grid.height, grid.width], valid)?;
    let d_keep = d.clone();
    let coords = depth.graph().record("warp_coords", out, &[depth, pose, intrinsics], move |g| {
        let gd = g.data();
        let dr = rodrigues_jacobian(&w);
        let mut g_depth = vec![0.0; n];
        let mut g_t = Vector3::zeros();
        let mut outer = Matrix3::zeros(); // sum of gY X^T
        let mut g_k = [0.0; 4];
        for y in 0..grid.height {
            for x in 0..grid.width {
                let i = y * grid.width + x;
                let q = transformed[i];
                if q.z <= MIN_Z {
                    continue;
                }
                let (gu, gv) = (gd[2 * i], gd[2 * i + 1]);
                let pt = points[i];
                let iz = 1.0 / q.z;
                let gq = Vector3::new(
                    gu * fxp * iz,
                    gv * fyp * iz,
                    -(gu * fxp * q.x + gv * fyp * q.y) * iz * iz,
                );
                g_t += gq;
                outer += gq * pt.transpose();
                let gp = r.transpose() * gq;
                let dv = d_keep.data()[i];
                g_depth[i] = gp.dot(&(pt / dv));
                // Projection side.
                g_k[0] += gu * wf * q.x * iz;
                g_k[2] += gu * wf;
                g_k[1] += gv * hf * q.y * iz;
                g_k[3] += gv * hf;
                // Back-projection side.
                g_k[0] += gp.x * (-pt.x / k.fx);
                g_k[2] += gp.x * (-dv / k.fx);
                g_k[1] += gp.y * (-pt.y / k.fy);
                g_k[3] += gp.y * (-dv / k.fy);
            }
        }
        let g_w: Vec<f64> = dr.iter().map(|m| m.component_mul(&outer).sum()).collect();
        let g_pose = vec![g_w[0], g_w[1], g_w[2], g_t.x, g_t.y, g_t.z];
        vec![
            Tensor::new(&[grid.height, grid.width], g_depth).expect("shape"),
            Tensor::from_vec(g_pose),
            Tensor::from_vec(g_k.to_vec()),
        ]
    })?;
    Ok(Warp { coords, valid })
}

/// [`warp_coords`] on plain values, outside any differentiation session.
pub fn warp_coords_tensor(depth: &Tensor, pose: &PoseSE3, intrinsics: &Intrinsics) -> Result<(Tensor, Tensor)> {
    let g = crate::Graph::new();
    let w = warp_coords(
        g.constant(depth.clone()),
        g.constant(pose.to_tensor()),
        g.constant(intrinsics.to_tensor()),
    )?;
    let coords = (*w.coords.value()).clone();
    Ok((coords, w.valid))
}
